//! Discrete energies and dyadic local-energy norms of solver slices.
//!
//! Every engine reduces a slice to a [`NormSlice`]: per-node volume weights,
//! `r`, `r̃`, the field and its derivatives. Norms are then engine-agnostic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::e1::E1Solver;
use crate::evolution::e2::E2Solver;
use crate::evolution::FieldSlice;
use crate::geometry::RadialMaps;
use crate::operators::Nonlinearity;
use crate::quadrature::pairwise_sum;
use crate::ramps::plateau;

/// `⟨r⟩ = sqrt(2 + r̃²)`.
pub fn japanese(rtilde: f64) -> f64 {
    (2.0 + rtilde * rtilde).sqrt()
}

/// Dyadic index `k` with `2^k <= ⟨r⟩ < 2^{k+1}`; `⟨r⟩ < 2` is lumped into 0.
pub fn annulus_index(jr: f64) -> usize {
    if jr < 2.0 {
        0
    } else {
        jr.log2().floor() as usize
    }
}

/// Trapping cutoff: 1 on `[2.8M, 3.2M]`, supported in `[2.5M, 3.5M]`, C⁴.
pub fn chi_ps(mass: f64, r: f64) -> f64 {
    plateau(r, 2.5 * mass, 2.8 * mass, 3.2 * mass, 3.5 * mass)
}

/// Field data on one slice, reduced to what the norms need.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NormSlice {
    pub time: f64,
    pub mass: f64,
    /// Volume weight of each node (quadrature weight times `dΣ` density).
    pub vol: Vec<f64>,
    pub r: Vec<f64>,
    pub rtilde: Vec<f64>,
    /// Cell bounds of each node in `⟨r⟩`, for splitting weights at annulus edges.
    pub cell_lo: Vec<f64>,
    pub cell_hi: Vec<f64>,
    pub u: Vec<f64>,
    pub u_t: Vec<f64>,
    /// Squared spatial gradient (radial plus angular).
    pub grad_sq: Vec<f64>,
    /// `∂_v u = ∂_t̃ u + ∂_r̃ u`.
    pub u_v: Vec<f64>,
    /// Squared angular gradient `|∂̸u|²`.
    pub ang_sq: Vec<f64>,
    /// Source `f` for the dual norm (the nonlinearity along the solution).
    pub source: Vec<f64>,
}

impl NormSlice {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Splits node weights over annuli: `(node, annulus, fraction)`.
    fn pieces(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.len() + 16);
        for i in 0..self.len() {
            let (lo, hi) = (self.cell_lo[i], self.cell_hi[i]);
            let (ka, kb) = (annulus_index(lo), annulus_index(hi));
            if ka == kb || !(hi > lo) {
                out.push((i, annulus_index(japanese(self.rtilde[i])), 1.0));
                continue;
            }
            for k in ka..=kb {
                let a = if k == 0 { lo } else { lo.max((2.0f64).powi(k as i32)) };
                let b = hi.min((2.0f64).powi(k as i32 + 1));
                if b > a {
                    out.push((i, k, (b - a) / (hi - lo)));
                }
            }
        }
        out
    }
}

/// Nondegenerate energy `∫ (u_t² + |∇u|²) dΣ`.
pub fn energy(s: &NormSlice) -> f64 {
    let v: Vec<f64> = (0..s.len()).map(|i| s.vol[i] * (s.u_t[i] * s.u_t[i] + s.grad_sq[i])).collect();
    pairwise_sum(&v)
}

/// Weighted energy `∫ r^γ (|∂_v u|² + |∂̸u|² + r^{-2}u²) dΣ`, `0 < γ < 2`.
pub fn energy_gamma(s: &NormSlice, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 2.0) {
        return Err(Error::Parameter(format!("gamma must lie in (0, 2), got {gamma}")));
    }
    let v: Vec<f64> = (0..s.len())
        .map(|i| {
            let r = s.r[i];
            s.vol[i] * r.powf(gamma) * (s.u_v[i] * s.u_v[i] + s.ang_sq[i] + s.u[i] * s.u[i] / (r * r))
        })
        .collect();
    Ok(pairwise_sum(&v))
}

/// Per-annulus integrands of one slice.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnulusMasses {
    /// `∫_{A_R} ⟨r⟩^{-1} u²`.
    pub le: Vec<f64>,
    /// `∫_{A_R} ⟨r⟩^{-1}(|∂u|² + ⟨r⟩^{-2}u²)`.
    pub le1: Vec<f64>,
    /// As `le1` with the spatial gradient degraded by `(1 − χ_ps)`.
    pub le1w: Vec<f64>,
    /// `∫_{A_R} ⟨r⟩ f²`.
    pub lestar: Vec<f64>,
}

pub fn annulus_masses(s: &NormSlice) -> AnnulusMasses {
    let pieces = s.pieces();
    let kmax = pieces.iter().map(|p| p.1).max().map_or(0, |k| k + 1);
    let mut bins: Vec<[Vec<f64>; 4]> = (0..kmax).map(|_| Default::default()).collect();
    for &(i, k, frac) in &pieces {
        let jr = japanese(s.rtilde[i]);
        let w = s.vol[i] * frac;
        let u2 = s.u[i] * s.u[i];
        let damp = 1.0 - chi_ps(s.mass, s.r[i]);
        let b = &mut bins[k];
        b[0].push(w * u2 / jr);
        b[1].push(w * (s.u_t[i] * s.u_t[i] + s.grad_sq[i] + u2 / (jr * jr)) / jr);
        b[2].push(w * (s.u_t[i] * s.u_t[i] + damp * damp * s.grad_sq[i] + u2 / (jr * jr)) / jr);
        b[3].push(w * jr * s.source[i] * s.source[i]);
    }
    let mut m = AnnulusMasses::default();
    for b in &bins {
        m.le.push(pairwise_sum(&b[0]));
        m.le1.push(pairwise_sum(&b[1]));
        m.le1w.push(pairwise_sum(&b[2]));
        m.lestar.push(pairwise_sum(&b[3]));
    }
    m
}

/// Annulus masses at each output time, for spacetime norms over windows.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnulusSeries {
    pub times: Vec<f64>,
    pub masses: Vec<AnnulusMasses>,
}

/// Spacetime norms over `[t₀, t₁]` plus the slice energies at `t₁`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormReport {
    pub window: (f64, f64),
    /// `(R, ‖⟨r⟩^{-1/2}u‖_{L²([t₀,t₁]×A_R)})`.
    pub le_table: Vec<(f64, f64)>,
    pub le: f64,
    pub le1: f64,
    pub le1w: f64,
    pub lestar: f64,
}

impl AnnulusSeries {
    pub fn push(&mut self, time: f64, m: AnnulusMasses) {
        self.times.push(time);
        self.masses.push(m);
    }

    fn kmax(&self) -> usize {
        self.masses.iter().map(|m| m.le.len()).max().unwrap_or(0)
    }

    /// Trapezoid-in-time integral of one family per annulus over the window,
    /// with linear interpolation at window ends.
    fn integrate(&self, pick: fn(&AnnulusMasses) -> &Vec<f64>, t0: f64, t1: f64) -> Vec<f64> {
        let kmax = self.kmax();
        let val = |j: usize, k: usize| pick(&self.masses[j]).get(k).copied().unwrap_or(0.0);
        let at = |t: f64, k: usize| {
            let j = self.times.partition_point(|&x| x < t).min(self.times.len() - 1);
            if j == 0 || self.times[j] == t {
                val(j, k)
            } else {
                let (ta, tb) = (self.times[j - 1], self.times[j]);
                let s = (t - ta) / (tb - ta);
                (1.0 - s) * val(j - 1, k) + s * val(j, k)
            }
        };
        (0..kmax)
            .map(|k| {
                let mut pts: Vec<(f64, f64)> = vec![(t0, at(t0, k))];
                for (j, &t) in self.times.iter().enumerate() {
                    if t > t0 && t < t1 {
                        pts.push((t, val(j, k)));
                    }
                }
                pts.push((t1, at(t1, k)));
                let segs: Vec<f64> = pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).collect();
                pairwise_sum(&segs)
            })
            .collect()
    }

    pub fn window_norms(&self, t0: f64, t1: f64) -> Result<NormReport> {
        let (first, last) = match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => (*a, *b),
            _ => return Err(Error::InsufficientData("no stored slices".into())),
        };
        if !(t0 >= first - 1e-9 && t1 <= last + 1e-9 && t1 >= t0) {
            return Err(Error::Domain(format!(
                "window [{t0}, {t1}] exceeds stored data [{first}, {last}]"
            )));
        }
        let le_k = self.integrate(|m| &m.le, t0, t1);
        let le1_k = self.integrate(|m| &m.le1, t0, t1);
        let le1w_k = self.integrate(|m| &m.le1w, t0, t1);
        let ls_k = self.integrate(|m| &m.lestar, t0, t1);
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.max(0.0).sqrt()));
        let le_table = le_k.iter().enumerate().map(|(k, v)| ((2.0f64).powi(k as i32), v.max(0.0).sqrt())).collect();
        Ok(NormReport {
            window: (t0, t1),
            le_table,
            le: sup(&le_k),
            le1: sup(&le1_k),
            le1w: sup(&le1w_k),
            lestar: ls_k.iter().map(|v| v.max(0.0).sqrt()).sum(),
        })
    }
}

/// 8th-order central first derivative; lower order toward the ends and
/// first-order one-sided at the end points.
pub fn derivative(u: &[f64], h: f64) -> Vec<f64> {
    let n = u.len();
    let mut d = vec![0.0; n];
    if n < 2 {
        return d;
    }
    const C8: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
    for i in 0..n {
        let reach = i.min(n - 1 - i);
        d[i] = match reach {
            0 => {
                if i == 0 {
                    (u[1] - u[0]) / h
                } else {
                    (u[n - 1] - u[n - 2]) / h
                }
            }
            1 => (u[i + 1] - u[i - 1]) / (2.0 * h),
            2 | 3 => (u[i - 2] - 8.0 * u[i - 1] + 8.0 * u[i + 1] - u[i + 2]) / (12.0 * h),
            _ => {
                let mut s = 0.0;
                for (k, c) in C8.iter().enumerate() {
                    s += c * (u[i + k + 1] - u[i - k - 1]);
                }
                s / h
            }
        };
    }
    d
}

/// Midpoint cell bounds of a monotone node sequence, mapped to `⟨r⟩`.
fn cells(rtilde: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = rtilde.len();
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for i in 0..n {
        let a = if i == 0 { rtilde[0] } else { 0.5 * (rtilde[i - 1] + rtilde[i]) };
        let b = if i + 1 == n { rtilde[n - 1] } else { 0.5 * (rtilde[i] + rtilde[i + 1]) };
        lo.push(japanese(a.max(0.0)));
        hi.push(japanese(b.max(0.0)));
    }
    (lo, hi)
}

/// Norm view of a 1+1 slice on the `t` slice (`dΣ = 4π r² dr`).
pub fn e1_norm_slice(solver: &E1Solver, s: &FieldSlice, maps: &RadialMaps) -> NormSlice {
    let n = solver.grid.n;
    let h = solver.grid.h();
    let r = &solver.r;
    let f: Vec<f64> = (0..n).map(|i| solver.x[i] / r[i]).collect();
    let u: Vec<f64> = (0..n).map(|i| s.phi[i] / r[i]).collect();
    let dpsi = derivative(&s.phi, h);
    let u_star: Vec<f64> = (0..n).map(|i| dpsi[i] / r[i] - s.phi[i] * f[i] / (r[i] * r[i])).collect();
    let u_t: Vec<f64> = (0..n).map(|i| s.pi[i] / r[i]).collect();
    let rtilde: Vec<f64> = r.iter().map(|&x| maps.rtilde(x)).collect();
    let u_v: Vec<f64> = (0..n)
        .map(|i| {
            let jac = maps.rtilde_prime(r[i]) * f[i];
            if jac > 1e-200 {
                u_t[i] + u_star[i] / jac
            } else {
                u_t[i]
            }
        })
        .collect();
    let vol: Vec<f64> = (0..n)
        .map(|i| {
            let w = if i == 0 || i + 1 == n { 0.5 * h } else { h };
            4.0 * std::f64::consts::PI * r[i] * r[i] * f[i] * w
        })
        .collect();
    let source = match solver.nl {
        Some(q) => u.iter().map(|&v| q.apply(v)).collect(),
        None => vec![0.0; n],
    };
    let (cell_lo, cell_hi) = cells(&rtilde);
    NormSlice {
        time: s.time,
        mass: solver.mass,
        vol,
        r: r.clone(),
        rtilde,
        cell_lo,
        cell_hi,
        grad_sq: u_star.iter().map(|v| v * v).collect(),
        u,
        u_t,
        u_v,
        ang_sq: vec![0.0; n],
        source,
    }
}

/// Norm view of a 2+1 slice (`dΣ = 2π |g|^{1/2} dr dθ`, φ-integrated).
pub fn e2_norm_slice(solver: &E2Solver, s: &FieldSlice, maps: &RadialMaps) -> NormSlice {
    let g = &solver.grid;
    let (nr, nth) = (g.n_r, g.n_theta);
    let (hr, hth) = (g.h_r(), g.h_theta());
    let mut u_r = vec![0.0; nr * nth];
    let mut col = vec![0.0; nr];
    for k in 0..nth {
        for i in 0..nr {
            col[i] = s.phi[i * nth + k];
        }
        for (i, d) in derivative(&col, hr).into_iter().enumerate() {
            u_r[i * nth + k] = d;
        }
    }
    let refl = |k: isize| -> usize {
        let n = nth as isize;
        let k = if k < 0 { -k - 1 } else { k };
        (if k >= n { 2 * n - k - 1 } else { k }) as usize
    };
    let n = nr * nth;
    let mut out = NormSlice { time: s.time, mass: solver.params.mass, ..Default::default() };
    let rt_row: Vec<f64> = (0..nr).map(|i| maps.rtilde(g.r(i))).collect();
    let (lo_row, hi_row) = cells(&rt_row);
    for i in 0..nr {
        let r = g.r(i);
        let rtp = maps.rtilde_prime(r);
        let wr = if i == 0 || i + 1 == nr { 0.5 * hr } else { hr };
        for k in 0..nth {
            let idx = i * nth + k;
            let at = |o: isize| s.phi[i * nth + refl(k as isize + o)];
            let u_th = (at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) / (12.0 * hth);
            let ang = (u_th / r) * (u_th / r);
            out.vol.push(2.0 * std::f64::consts::PI * solver.sqrt_det[idx] * wr * hth);
            out.r.push(r);
            out.rtilde.push(rt_row[i]);
            out.cell_lo.push(lo_row[i]);
            out.cell_hi.push(hi_row[i]);
            out.u.push(s.phi[idx]);
            out.u_t.push(s.pi[idx]);
            out.grad_sq.push(u_r[idx] * u_r[idx] + ang);
            out.u_v.push(s.pi[idx] + u_r[idx] / rtp);
            out.ang_sq.push(ang);
        }
    }
    out.source = source_of(solver.nl, &out.u);
    debug_assert_eq!(out.u.len(), n);
    out
}

/// Source array helper for engines without a stored nonlinearity.
pub fn source_of(nl: Option<Nonlinearity>, u: &[f64]) -> Vec<f64> {
    match nl {
        Some(q) => u.iter().map(|&v| q.apply(v)).collect(),
        None => vec![0.0; u.len()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::e1::Grid1D;
    use crate::evolution::InitialDataSpec;
    use crate::geometry::{build_radial_maps, KerrParams};
    use crate::quadrature::integrate;
    use std::f64::consts::PI;

    /// Synthetic radial slice on uniform `r̃ = r` nodes with `dΣ = 4π r² dr`.
    fn synthetic(rmin: f64, rmax: f64, n: usize, u: impl Fn(f64) -> f64) -> NormSlice {
        let h = (rmax - rmin) / (n - 1) as f64;
        let r: Vec<f64> = (0..n).map(|i| rmin + i as f64 * h).collect();
        let vol = (0..n)
            .map(|i| {
                let w = if i == 0 || i + 1 == n { 0.5 * h } else { h };
                4.0 * PI * r[i] * r[i] * w
            })
            .collect();
        let (lo, hi) = cells(&r);
        let uu: Vec<f64> = r.iter().map(|&x| u(x)).collect();
        NormSlice {
            time: 0.0,
            mass: 1.0,
            vol,
            rtilde: r.clone(),
            cell_lo: lo,
            cell_hi: hi,
            u_t: vec![0.0; n],
            grad_sq: vec![0.0; n],
            u_v: vec![0.0; n],
            ang_sq: vec![0.0; n],
            source: vec![0.0; n],
            u: uu,
            r,
        }
    }

    #[test]
    fn japanese_bracket() {
        assert!((japanese(0.0) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(annulus_index(1.5), 0);
        assert_eq!(annulus_index(2.0), 1);
        assert_eq!(annulus_index(7.9), 2);
    }

    #[test]
    fn chi_ps_shape() {
        assert_eq!(chi_ps(1.0, 3.0), 1.0);
        assert_eq!(chi_ps(1.0, 2.4), 0.0);
        assert_eq!(chi_ps(1.0, 3.6), 0.0);
        for i in 0..200 {
            let v = chi_ps(1.0, 2.0 + i as f64 * 0.01);
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn zero_field_all_zero() {
        let s = synthetic(1.0, 30.0, 200, |_| 0.0);
        assert_eq!(energy(&s), 0.0);
        assert_eq!(energy_gamma(&s, 1.0).unwrap(), 0.0);
        let m = annulus_masses(&s);
        assert!(m.le.iter().chain(&m.le1).chain(&m.lestar).all(|v| *v == 0.0));
    }

    #[test]
    fn gamma_range_enforced() {
        let s = synthetic(1.0, 30.0, 20, |_| 1.0);
        assert!(energy_gamma(&s, 0.0).is_err());
        assert!(energy_gamma(&s, 2.0).is_err());
    }

    #[test]
    fn top_hat_gamma_limit() {
        // φ = 1 on [5, 9]: ∫ r^γ r^{-2} 4π r² dr → 4π·4 as γ → 0.
        let s = synthetic(0.5, 20.0, 19501, |r| if (5.0..=9.0).contains(&r) { 1.0 } else { 0.0 });
        let e = energy_gamma(&s, 1e-9).unwrap();
        assert!((e - 16.0 * PI).abs() < 1e-3 * 16.0 * PI, "{e}");
    }

    #[test]
    fn le_single_annulus_unit_field() {
        // u ≡ 1 in A_2 (2 <= ⟨r⟩ < 4) over t ∈ [0, 1].
        let n = 40001;
        let jr_lo = 2.0f64;
        let jr_hi = 4.0f64;
        let r_lo = (jr_lo * jr_lo - 2.0).sqrt();
        let r_hi = (jr_hi * jr_hi - 2.0).sqrt();
        let s = synthetic(0.0, 10.0, n, |r| if r >= r_lo && r < r_hi { 1.0 } else { 0.0 });
        let mut ser = AnnulusSeries::default();
        ser.push(0.0, annulus_masses(&s));
        ser.push(1.0, annulus_masses(&s));
        let rep = ser.window_norms(0.0, 1.0).unwrap();
        let oracle = integrate(|r| 4.0 * PI * r * r / japanese(r), r_lo, r_hi, 1e-13, 1e-13).unwrap().value.sqrt();
        assert!((rep.le_table[1].1 / oracle - 1.0).abs() < 1e-3);
        assert_eq!(rep.le, rep.le_table.iter().fold(0.0f64, |m, x| m.max(x.1)));
        assert!(ser.window_norms(0.0, 2.0).is_err());
    }

    #[test]
    fn energy_scaling_and_weak_bound() {
        let p = KerrParams::schwarzschild(1.0).unwrap();
        let maps = build_radial_maps(&p, 8.0).unwrap();
        let g = Grid1D::with_spacing(-50.0, 80.0, 0.1).unwrap();
        let sol = E1Solver::new(1.0, g, 0, None, 0.0).unwrap();
        let f = sol.init_data(&InitialDataSpec::default()).unwrap();
        let mut f2 = f.clone();
        f2.phi.iter_mut().for_each(|v| *v *= 2.0);
        let a = e1_norm_slice(&sol, &f, &maps);
        let b = e1_norm_slice(&sol, &f2, &maps);
        assert!((energy(&b) / energy(&a) - 4.0).abs() < 1e-12);
        let m = annulus_masses(&a);
        for k in 0..m.le1.len() {
            assert!(m.le1w[k] <= m.le1[k] + 1e-300);
        }
    }

    #[test]
    fn e1_energy_matches_quadrature_oracle() {
        let p = KerrParams::schwarzschild(1.0).unwrap();
        let maps = build_radial_maps(&p, 8.0).unwrap();
        let spec = InitialDataSpec::default();
        let g = Grid1D::with_spacing(-50.0, 80.0, 0.05).unwrap();
        let sol = E1Solver::new(1.0, g, 0, None, 0.0).unwrap();
        let ns = e1_norm_slice(&sol, &sol.init_data(&spec).unwrap(), &maps);
        // E = 4π ∫ (f φ_r)² r² dr over the support, φ_t = 0.
        let oracle = integrate(
            |r| {
                let f = 1.0 - 2.0 / r;
                let d = f * spec.dphi_dr(r);
                4.0 * PI * r * r * d * d
            },
            8.0,
            16.0,
            1e-15,
            1e-13,
        )
        .unwrap()
        .value;
        assert!((energy(&ns) / oracle - 1.0).abs() < 1e-6, "{} vs {oracle}", energy(&ns));
    }
}
