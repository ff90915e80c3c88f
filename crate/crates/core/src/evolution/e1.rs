//! 1+1 Regge–Wheeler-reduced Schwarzschild evolution for `ψ = rφ` on a
//! uniform `r*` grid: 4th-order differences, 6th-difference Kreiss–Oliger
//! dissipation and classical RK4.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{lagrange6, BlowUp, FieldSlice, InitialDataSpec, ProbeSample, BLOWUP_THRESHOLD};
use crate::error::{Error, Result};
use crate::geometry::{invert_tortoise_offset, tortoise};
use crate::operators::{rw_potential_offset, Nonlinearity};
use crate::quadrature::pairwise_sum;
use crate::stencil::d1c4;

/// Uniform grid in `r*`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub rstar_min: f64,
    pub rstar_max: f64,
    pub n: usize,
}

impl Grid1D {
    pub fn new(rstar_min: f64, rstar_max: f64, n: usize) -> Result<Self> {
        if !(rstar_max > rstar_min) || n < 16 {
            return Err(Error::Parameter(format!(
                "1+1 grid needs r*_max > r*_min and at least 16 points (got [{rstar_min}, {rstar_max}], n = {n})"
            )));
        }
        Ok(Grid1D { rstar_min, rstar_max, n })
    }

    /// Grid with spacing `h` (the upper bound is rounded to a whole cell).
    pub fn with_spacing(rstar_min: f64, rstar_max: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Parameter(format!("grid spacing must be positive, got {h}")));
        }
        let cells = ((rstar_max - rstar_min) / h).round() as usize;
        Self::new(rstar_min, rstar_min + cells as f64 * h, cells + 1)
    }

    pub fn h(&self) -> f64 {
        (self.rstar_max - self.rstar_min) / (self.n - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.rstar_min + i as f64 * self.h()
    }
}

/// Points kept frozen at each end; wider than the interior stencil.
const EDGE: usize = 3;
/// Work items per parallel chunk.
const CHUNK: usize = 8192;
/// Potentials below this are flushed to zero (no subnormal arithmetic).
const POTENTIAL_FLOOR: f64 = 1e-250;

#[derive(Clone, Debug)]
pub struct E1Solver {
    pub mass: f64,
    pub grid: Grid1D,
    pub ell: u32,
    pub nl: Option<Nonlinearity>,
    pub ko_sigma: f64,
    /// Areal radius at each node.
    pub r: Vec<f64>,
    /// `r − 2M`, kept separately for accuracy near the horizon.
    pub x: Vec<f64>,
    inv_r: Vec<f64>,
    potential: Vec<f64>,
    /// `−sign · (r − 2M)`: the reduced source is `nl_coef · (ψ/r)^p`.
    nl_coef: Vec<f64>,
    buf: Buffers,
}

#[derive(Clone, Debug, Default)]
struct Buffers {
    acc_psi: Vec<f64>,
    acc_pi: Vec<f64>,
    tmp_psi: Vec<f64>,
    tmp_pi: Vec<f64>,
    k_psi: Vec<f64>,
    k_pi: Vec<f64>,
}

impl E1Solver {
    pub fn new(
        mass: f64,
        grid: Grid1D,
        ell: u32,
        nl: Option<Nonlinearity>,
        ko_sigma: f64,
    ) -> Result<Self> {
        if !(mass > 0.0) || !(ko_sigma >= 0.0) {
            return Err(Error::Parameter(format!(
                "need M > 0 and ko_sigma >= 0 (M = {mass}, sigma = {ko_sigma})"
            )));
        }
        let n = grid.n;
        let mut r = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n);
        for i in 0..n {
            let xi = invert_tortoise_offset(mass, grid.coord(i));
            x.push(xi);
            r.push(2.0 * mass + xi);
        }
        let inv_r: Vec<f64> = r.iter().map(|v| 1.0 / v).collect();
        let potential = x
            .iter()
            .map(|&xi| {
                let v = rw_potential_offset(mass, xi, ell);
                if v < POTENTIAL_FLOOR {
                    0.0
                } else {
                    v
                }
            })
            .collect();
        let sign = nl.map_or(0.0, |q| q.sign as f64);
        let nl_coef = x.iter().map(|&xi| -sign * xi).collect();
        let z = vec![0.0; n];
        let buf = Buffers {
            acc_psi: z.clone(),
            acc_pi: z.clone(),
            tmp_psi: z.clone(),
            tmp_pi: z.clone(),
            k_psi: z.clone(),
            k_pi: z,
        };
        Ok(E1Solver { mass, grid, ell, nl, ko_sigma, r, x, inv_r, potential, nl_coef, buf })
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// Largest stable step for the given Courant factor.
    pub fn dt(&self, cfl: f64) -> f64 {
        cfl * self.grid.h()
    }

    /// Time-symmetric (or outgoing) bump data; `phi` holds `ψ = rφ`.
    pub fn init_data(&self, spec: &InitialDataSpec) -> Result<FieldSlice> {
        let (lo, hi) = spec.support(2.0 * self.mass)?;
        let r_lo = 2.0 * self.mass + invert_tortoise_offset(self.mass, self.grid.coord(EDGE + 3));
        let r_hi = 2.0 * self.mass + invert_tortoise_offset(self.mass, self.grid.coord(self.grid.n - EDGE - 4));
        if lo <= r_lo || hi >= r_hi {
            return Err(Error::Parameter(format!(
                "data support [{lo}, {hi}] is clipped by the grid (r in [{r_lo}, {r_hi}])"
            )));
        }
        let n = self.grid.n;
        let mut s = FieldSlice::zeros(n);
        for i in 0..n {
            s.phi[i] = self.r[i] * spec.phi(self.r[i]);
        }
        if !spec.time_symmetric {
            // ∂_t ψ = −∂_{r*} ψ: an outgoing packet.
            let f = |i: usize| (self.x[i] / self.r[i]) * (spec.phi(self.r[i]) + self.r[i] * spec.dphi_dr(self.r[i]));
            for i in 0..n {
                s.pi[i] = -f(i);
            }
        }
        Ok(s)
    }

    /// Time derivatives of `(ψ, ∂_tψ)`:
    /// `∂_tψ = π + σ·KO(ψ)`, `∂_tπ = ∂²_{r*}ψ − Vψ − sign·(r − 2M)(ψ/r)^p + σ·KO(π)`.
    pub fn rhs(&self, psi: &[f64], pi: &[f64], dpsi: &mut [f64], dpi: &mut [f64]) {
        let n = self.grid.n;
        dpsi[..EDGE].fill(0.0);
        dpi[..EDGE].fill(0.0);
        dpsi[n - EDGE..].fill(0.0);
        dpi[n - EDGE..].fill(0.0);
        let interior = EDGE..n - EDGE;
        dpsi[interior.clone()]
            .par_chunks_mut(CHUNK)
            .zip(dpi[interior].par_chunks_mut(CHUNK))
            .enumerate()
            .for_each(|(c, (a, b))| self.rhs_block(psi, pi, EDGE + c * CHUNK, a, b));
    }

    /// Interior kernel for nodes `start..start + a.len()`.
    fn rhs_block(&self, psi: &[f64], pi: &[f64], start: usize, a: &mut [f64], b: &mut [f64]) {
        let h = self.grid.h();
        let c2 = 1.0 / (12.0 * h * h);
        let ko = self.ko_sigma / (64.0 * h);
        let len = a.len();
        let lo = start - 3;
        let psi = &psi[lo..start + len + 3];
        let pi = &pi[lo..start + len + 3];
        let pot = &self.potential[start..start + len];
        let coef = &self.nl_coef[start..start + len];
        let inv_r = &self.inv_r[start..start + len];
        let b = &mut b[..len];
        for k in 0..len {
            let u = &psi[k..k + 7];
            let v = &pi[k..k + 7];
            let d2 = (-u[1] + 16.0 * u[2] - 30.0 * u[3] + 16.0 * u[4] - u[5]) * c2;
            let ku = u[0] + u[6] - 6.0 * (u[1] + u[5]) + 15.0 * (u[2] + u[4]) - 20.0 * u[3];
            let kv = v[0] + v[6] - 6.0 * (v[1] + v[5]) + 15.0 * (v[2] + v[4]) - 20.0 * v[3];
            a[k] = v[3] + ko * ku;
            b[k] = d2 - pot[k] * u[3] + ko * kv;
        }
        if let Some(q) = self.nl {
            let p = q.p as i32;
            for k in 0..len {
                b[k] += coef[k] * (psi[k + 3] * inv_r[k]).powi(p);
            }
        }
    }

    /// One classical RK4 step. The slice is left at the last finite state if
    /// the step produces non-finite values or crosses the blow-up threshold.
    pub fn step(&mut self, s: &mut FieldSlice, dt: f64) -> std::result::Result<(), BlowUp> {
        let mut b = std::mem::take(&mut self.buf);
        b.acc_psi.copy_from_slice(&s.phi);
        b.acc_pi.copy_from_slice(&s.pi);
        let stages = [(0.5, 1.0 / 6.0), (0.5, 1.0 / 3.0), (1.0, 1.0 / 3.0), (0.0, 1.0 / 6.0)];
        for (stage, &(next, weight)) in stages.iter().enumerate() {
            {
                let (src_psi, src_pi) = if stage == 0 {
                    (&s.phi, &s.pi)
                } else {
                    (&b.tmp_psi, &b.tmp_pi)
                };
                self.rhs(src_psi, src_pi, &mut b.k_psi, &mut b.k_pi);
            }
            let wdt = weight * dt;
            axpy(&mut b.acc_psi, wdt, &b.k_psi);
            axpy(&mut b.acc_pi, wdt, &b.k_pi);
            if stage < 3 {
                combine(&mut b.tmp_psi, &s.phi, next * dt, &b.k_psi);
                combine(&mut b.tmp_pi, &s.pi, next * dt, &b.k_pi);
            }
        }
        let bad = b
            .acc_psi
            .iter()
            .zip(&self.inv_r)
            .position(|(v, ir)| !(v * ir).is_finite() || (v * ir).abs() > BLOWUP_THRESHOLD);
        let res = match bad {
            Some(i) => Err(BlowUp {
                time: s.time + dt,
                radius: self.grid.coord(i),
                theta: None,
                value: b.acc_psi[i] * self.inv_r[i],
            }),
            None => {
                std::mem::swap(&mut s.phi, &mut b.acc_psi);
                std::mem::swap(&mut s.pi, &mut b.acc_pi);
                s.time += dt;
                Ok(())
            }
        };
        self.buf = b;
        res
    }

    /// Killing energy `4π · ½∫(ψ_t² + ψ_{r*}² + Vψ²) dr*` (ℓ = 0 normalisation).
    pub fn energy(&self, s: &FieldSlice) -> f64 {
        let n = self.grid.n;
        let h = self.grid.h();
        let dens: Vec<f64> = (0..n)
            .map(|i| {
                let d = if i >= 2 && i + 2 < n { d1c4(&s.phi, i, 1.0 / h) } else { 0.0 };
                s.pi[i] * s.pi[i] + d * d + self.potential[i] * s.phi[i] * s.phi[i]
            })
            .collect();
        2.0 * std::f64::consts::PI * h * pairwise_sum(&dens)
    }

    /// Outgoing flux `4π ∫ ψ_t ψ_{r*}` through the node closest to `rstar`,
    /// the rate at which energy leaves the region to its left.
    pub fn flux_at(&self, s: &FieldSlice, rstar: f64) -> f64 {
        let h = self.grid.h();
        let i = (((rstar - self.grid.rstar_min) / h).round() as usize).clamp(2, self.grid.n - 3);
        -4.0 * std::f64::consts::PI * s.pi[i] * d1c4(&s.phi, i, 1.0 / h)
    }

    /// `φ`, `∂_tφ` and `∂_rφ` at `r*`, by six-point interpolation.
    pub fn sample(&self, s: &FieldSlice, rstar: f64) -> Option<ProbeSample> {
        let h = self.grid.h();
        let pos = (rstar - self.grid.rstar_min) / h;
        let i0 = pos.floor();
        if !(i0 >= 2.0 + EDGE as f64) || i0 as usize + 3 + EDGE >= self.grid.n {
            return None;
        }
        let i0 = i0 as usize;
        let (w, dw) = lagrange6(pos - i0 as f64);
        let mut psi = 0.0;
        let mut dpsi = 0.0;
        let mut pi = 0.0;
        for k in 0..6 {
            let j = i0 + k - 2;
            psi += w[k] * s.phi[j];
            dpsi += dw[k] * s.phi[j];
            pi += w[k] * s.pi[j];
        }
        dpsi /= h;
        let x = invert_tortoise_offset(self.mass, rstar);
        let r = 2.0 * self.mass + x;
        let dpsi_dr = dpsi * r / x;
        Some(ProbeSample {
            t: s.time,
            rtilde: rstar,
            phi: psi / r,
            dphi_dt: pi / r,
            dphi_dr: (dpsi_dr * r - psi) / (r * r),
        })
    }

    /// `r*` of the node nearest to areal radius `r`.
    pub fn rstar_of(&self, r: f64) -> f64 {
        tortoise(self.mass, r)
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.par_chunks_mut(CHUNK).zip(x.par_chunks(CHUNK)).for_each(|(yc, xc)| {
        for (yi, xi) in yc.iter_mut().zip(xc) {
            *yi += a * xi;
        }
    });
}

fn combine(out: &mut [f64], y: &[f64], a: f64, k: &[f64]) {
    out.par_chunks_mut(CHUNK)
        .zip(y.par_chunks(CHUNK).zip(k.par_chunks(CHUNK)))
        .for_each(|(oc, (yc, kc))| {
            for ((o, yi), ki) in oc.iter_mut().zip(yc).zip(kc) {
                *o = yi + a * ki;
            }
        });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solver(nl: Option<Nonlinearity>) -> E1Solver {
        let g = Grid1D::with_spacing(-100.0, 200.0, 0.1).unwrap();
        E1Solver::new(1.0, g, 0, nl, 0.02).unwrap()
    }

    #[test]
    fn zero_slice_zero_rhs() {
        let s = solver(Nonlinearity::new(3, 1).ok());
        let n = s.grid.n;
        let z = vec![0.0; n];
        let (mut a, mut b) = (vec![1.0; n], vec![1.0; n]);
        s.rhs(&z, &z, &mut a, &mut b);
        assert!(a.iter().chain(&b).all(|v| *v == 0.0));
    }

    #[test]
    fn reduced_nonlinear_term() {
        // ψ/r = 2 at r = 10: source −sign·(r − 2M)·2³ = −64 for p = 3, sign +1.
        let mut s = solver(Nonlinearity::new(3, 1).ok());
        let i = (0..s.grid.n).min_by(|&a, &b| (s.r[a] - 10.0).abs().total_cmp(&(s.r[b] - 10.0).abs())).unwrap();
        s.potential.iter_mut().for_each(|v| *v = 0.0);
        s.ko_sigma = 0.0;
        let r = s.r[i];
        let psi = vec![2.0 * r; s.grid.n];
        let pi = vec![0.0; s.grid.n];
        let (mut a, mut b) = (vec![0.0; s.grid.n], vec![0.0; s.grid.n]);
        s.rhs(&psi, &pi, &mut a, &mut b);
        // the constant profile has zero second difference
        let expect = -(r - 2.0) * 8.0;
        assert!((b[i] - expect).abs() < 1e-9 * expect.abs(), "{} {}", b[i], expect);
        let r10 = 10.0;
        assert_eq!(-(r10 - 2.0) * 2f64.powi(3), -64.0);
    }

    #[test]
    fn flat_mode_symbol() {
        let mut s = solver(None);
        s.potential.iter_mut().for_each(|v| *v = 0.0);
        s.ko_sigma = 0.0;
        let k = 0.7;
        let h = s.grid.h();
        let psi: Vec<f64> = (0..s.grid.n).map(|i| (k * s.grid.coord(i)).sin()).collect();
        let pi = vec![0.0; s.grid.n];
        let (mut a, mut b) = (vec![0.0; s.grid.n], vec![0.0; s.grid.n]);
        s.rhs(&psi, &pi, &mut a, &mut b);
        let kh = k * h;
        let symbol = -(16.0 * (1.0 - kh.cos()) - (1.0 - (2.0 * kh).cos())) / (6.0 * h * h);
        for i in [100, 1234, 2000] {
            assert!((b[i] - symbol * psi[i]).abs() < 1e-10);
            assert!((b[i] + k * k * psi[i]).abs() < 1e-5);
        }
    }

    #[test]
    fn grid_radius_accuracy() {
        let s = solver(None);
        for i in [0, 10, 1000, s.grid.n - 1] {
            let back = tortoise(1.0, s.r[i]);
            if s.x[i] > 1e-10 {
                assert!((back - s.grid.coord(i)).abs() < 1e-10 * s.grid.coord(i).abs().max(1.0));
            }
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let mut s = solver(Nonlinearity::new(3, 1).ok());
        let mut f = s.init_data(&InitialDataSpec { epsilon: 0.0, ..Default::default() }).unwrap();
        for _ in 0..10 {
            s.step(&mut f, 0.05).unwrap();
        }
        assert!(f.phi.iter().chain(&f.pi).all(|v| *v == 0.0));
    }

    #[test]
    fn init_data_max_and_support() {
        let s = solver(None);
        let f = s.init_data(&InitialDataSpec::default()).unwrap();
        let mut best: f64 = 0.0;
        for i in 0..s.grid.n {
            let phi = f.phi[i] / s.r[i];
            best = best.max(phi.abs());
            if s.r[i] > 16.0 {
                assert_eq!(f.phi[i], 0.0);
            }
        }
        assert!((best - 0.1 * (-1f64).exp()).abs() < 1e-5);
        let small = E1Solver::new(1.0, Grid1D::with_spacing(-10.0, 12.0, 0.1).unwrap(), 0, None, 0.0).unwrap();
        assert!(small.init_data(&InitialDataSpec::default()).is_err());
    }

    #[test]
    fn amplitude_scaling_linear() {
        let run = |eps: f64| {
            let g = Grid1D::with_spacing(-60.0, 80.0, 0.2).unwrap();
            let mut s = E1Solver::new(1.0, g, 0, None, 0.02).unwrap();
            let mut f = s.init_data(&InitialDataSpec { epsilon: eps, ..Default::default() }).unwrap();
            for _ in 0..200 {
                s.step(&mut f, 0.1).unwrap();
            }
            f
        };
        let a = run(0.1);
        let b = run(0.05);
        let scale = a.phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.phi.iter().zip(&b.phi) {
            assert!((x - 2.0 * y).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn focusing_blowup_reported() {
        let g = Grid1D::with_spacing(-40.0, 60.0, 0.1).unwrap();
        let mut s = E1Solver::new(1.0, g, 0, Nonlinearity::focusing(3).ok(), 0.02).unwrap();
        let mut f = s.init_data(&InitialDataSpec { epsilon: 5.0, ..Default::default() }).unwrap();
        let mut out = None;
        for _ in 0..4000 {
            if let Err(b) = s.step(&mut f, 0.05) {
                out = Some(b);
                break;
            }
        }
        let b = out.expect("large focusing data should blow up");
        assert!(b.time > 0.0 && b.radius > -40.0 && b.radius < 60.0);
        assert!(f.is_finite());
    }
}
