//! Vector-field multipliers: energy-momentum tensor, contracted currents for
//! `(X, q, m)` and a finite-difference check of the divergence identity
//!
//! `∇^α P_α = □φ (Xφ + qφ) + ½ Q^{αβ} π^X_{αβ} + q ∂^αφ∂_αφ + m_α φ ∂^αφ + (½∇^α m_α − ½□q) φ²`.
//!
//! All tensors live in the `t̃` chart, coordinates ordered `(t, r, φ, θ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ttilde_star_metric, KerrParams, Mat4, MetricPoint, RadialMaps, PHI, R, T, THETA};
use crate::ramps::{ramp_up, ramp_up_prime};
use crate::stencil::deriv6;

/// Default cutoff radius `R₂` in units of `M`.
pub const DEFAULT_R2: f64 = 20.0;

/// `X = χ r^γ ∂_v`, `q = χ r^{γ−1}(1 − 2M/r)`, `m = χ γ(1−δ) r^{γ−2} dv`
/// with `χ = χ_{R₂}` rising on `[R₂/2, R₂]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierTriple {
    pub gamma: f64,
    pub delta: f64,
    pub mass: f64,
    pub r2: f64,
}

/// `(1−δ)² − 2(1−γδ)`; admissible triples make this negative.
pub fn admissibility(gamma: f64, delta: f64) -> f64 {
    (1.0 - delta).powi(2) - 2.0 * (1.0 - gamma * delta)
}

impl MultiplierTriple {
    pub fn new(gamma: f64, delta: f64, mass: f64, r2: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 2.0) {
            return Err(Error::Parameter(format!("gamma must lie in (0, 2), got {gamma}")));
        }
        if !(delta > 0.0) || !(mass > 0.0) || !(r2 > 0.0) {
            return Err(Error::Parameter(format!(
                "need delta, M, R2 > 0 (delta = {delta}, M = {mass}, R2 = {r2})"
            )));
        }
        let adm = admissibility(gamma, delta);
        if !(adm < 0.0) {
            return Err(Error::Parameter(format!(
                "(1-delta)^2 - 2(1-gamma*delta) = {adm} is not negative for gamma = {gamma}, delta = {delta}"
            )));
        }
        Ok(MultiplierTriple { gamma, delta, mass, r2 })
    }

    pub fn chi(&self, r: f64) -> f64 {
        ramp_up(r, 0.5 * self.r2, self.r2)
    }

    fn chi_prime(&self, r: f64) -> f64 {
        ramp_up_prime(r, 0.5 * self.r2, self.r2)
    }

    /// `X^α`.
    pub fn x(&self, maps: &RadialMaps, r: f64) -> [f64; 4] {
        let s = self.chi(r) * r.powf(self.gamma);
        [s, s / maps.rtilde_prime(r), 0.0, 0.0]
    }

    pub fn q(&self, r: f64) -> f64 {
        let m = self.mass;
        self.chi(r) * r.powf(self.gamma - 1.0) * (1.0 - 2.0 * m / r)
    }

    pub fn q_prime(&self, r: f64) -> f64 {
        let (g, m) = (self.gamma, self.mass);
        let base = r.powf(g - 1.0) - 2.0 * m * r.powf(g - 2.0);
        let dbase = (g - 1.0) * r.powf(g - 2.0) - 2.0 * m * (g - 2.0) * r.powf(g - 3.0);
        self.chi_prime(r) * base + self.chi(r) * dbase
    }

    /// `m_α`, with `dv = dt̃ + r̃' dr`.
    pub fn m(&self, maps: &RadialMaps, r: f64) -> [f64; 4] {
        let s = self.chi(r) * self.gamma * (1.0 - self.delta) * r.powf(self.gamma - 2.0);
        [s, s * maps.rtilde_prime(r), 0.0, 0.0]
    }
}

/// `Q_αβ = ∂_αφ ∂_βφ − ½ g_αβ ∂^μφ ∂_μφ`.
pub fn energy_momentum(point: &MetricPoint, dphi: [f64; 4]) -> Mat4 {
    let n = point.norm_upper(dphi);
    let mut q = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            q[a][b] = dphi[a] * dphi[b] - 0.5 * point.g_lower[a][b] * n;
        }
    }
    q
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurrentPoint {
    pub p: [f64; 4],
    pub q: Mat4,
}

/// `P_α = Q_αβ X^β + qφ∂_αφ − ½(∂_α q)φ² + ½ m_α φ²` at `point`.
pub fn contracted_current(
    point: &MetricPoint,
    maps: &RadialMaps,
    triple: &MultiplierTriple,
    phi: f64,
    dphi: [f64; 4],
) -> Result<CurrentPoint> {
    let r = point.r();
    if r < 0.5 * triple.r2 {
        return Err(Error::Domain(format!("current requested at r = {r} < R2/2 = {}", 0.5 * triple.r2)));
    }
    let qt = energy_momentum(point, dphi);
    let x = triple.x(maps, r);
    let m = triple.m(maps, r);
    let (q, dq) = (triple.q(r), triple.q_prime(r));
    let mut p = [0.0; 4];
    for a in 0..4 {
        p[a] = (0..4).map(|b| qt[a][b] * x[b]).sum::<f64>() + q * phi * dphi[a] + 0.5 * m[a] * phi * phi;
    }
    p[R] -= 0.5 * dq * phi * phi;
    Ok(CurrentPoint { p, q: qt })
}

/// Model integrand `r^γ(|∂_vφ|² + |∂̸φ|² + r^{-2}φ²)` and the current pairing
/// `−⟨dt̃, P⟩ = −g^{t̃α}P_α`.
pub fn weighted_energy_integrand(
    point: &MetricPoint,
    maps: &RadialMaps,
    triple: &MultiplierTriple,
    phi: f64,
    dphi: [f64; 4],
) -> Result<(f64, f64)> {
    let r = point.r();
    let th = point.theta();
    let dv = dphi[T] + dphi[R] / maps.rtilde_prime(r);
    let ang = (dphi[THETA] / r).powi(2) + (dphi[PHI] / (r * th.sin())).powi(2);
    let model = r.powf(triple.gamma) * (dv * dv + ang + phi * phi / (r * r));
    let cur = contracted_current(point, maps, triple, phi, dphi)?;
    let pairing = -(0..4).map(|a| point.g_upper[T][a] * cur.p[a]).sum::<f64>();
    Ok((model, pairing))
}

/// Flux density `−g^{t̃α}Q_{αt̃}` of the stationary multiplier `∂_t̃`.
pub fn static_energy_density(point: &MetricPoint, dphi: [f64; 4]) -> f64 {
    let q = energy_momentum(point, dphi);
    -(0..4).map(|a| point.g_upper[T][a] * q[a][T]).sum::<f64>()
}

/// Analytic test fields with exact gradient and Hessian.
#[derive(Clone, Debug, PartialEq)]
pub enum AnalyticField {
    Constant(f64),
    /// Sum of `c · t^{e₀} r^{e₁} φ^{e₂} θ^{e₃}` monomials.
    Polynomial(Vec<(f64, [u32; 4])>),
    /// `A sin(k·x + c)`.
    Wave { amp: f64, k: [f64; 4], phase: f64 },
}

impl AnalyticField {
    /// Degree-3 polynomial touching every coordinate.
    pub fn cubic() -> Self {
        AnalyticField::Polynomial(vec![
            (1.0, [0, 0, 0, 0]),
            (0.3, [1, 0, 0, 0]),
            (-0.2, [0, 1, 0, 0]),
            (0.1, [0, 0, 0, 1]),
            (0.05, [1, 1, 0, 0]),
            (-0.02, [0, 1, 0, 1]),
            (0.01, [2, 0, 0, 0]),
            (0.002, [1, 0, 1, 1]),
            (0.04, [0, 0, 2, 0]),
            (0.003, [0, 1, 2, 0]),
            (-0.001, [0, 3, 0, 0]),
            (0.007, [0, 0, 0, 3]),
        ])
    }

    pub fn oscillatory() -> Self {
        AnalyticField::Wave { amp: 0.8, k: [0.7, -0.9, 0.3, 0.5], phase: 0.2 }
    }

    pub fn eval(&self, x: [f64; 4]) -> (f64, [f64; 4], Mat4) {
        match self {
            AnalyticField::Constant(c) => (*c, [0.0; 4], [[0.0; 4]; 4]),
            AnalyticField::Wave { amp, k, phase } => {
                let w: f64 = (0..4).map(|i| k[i] * x[i]).sum::<f64>() + phase;
                let (s, c) = w.sin_cos();
                let mut g = [0.0; 4];
                let mut h = [[0.0; 4]; 4];
                for i in 0..4 {
                    g[i] = amp * c * k[i];
                    for j in 0..4 {
                        h[i][j] = -amp * s * k[i] * k[j];
                    }
                }
                (amp * s, g, h)
            }
            AnalyticField::Polynomial(terms) => {
                let pw = |v: f64, e: i32| if e < 0 { 0.0 } else { v.powi(e) };
                let mut val = 0.0;
                let mut g = [0.0; 4];
                let mut h = [[0.0; 4]; 4];
                for (c, e) in terms {
                    let e = e.map(|v| v as i32);
                    let mono = |d: [i32; 4]| -> f64 {
                        let mut out = *c;
                        for i in 0..4 {
                            let mut f = 1.0;
                            for j in 0..d[i] {
                                f *= (e[i] - j) as f64;
                            }
                            out *= f * pw(x[i], e[i] - d[i]);
                        }
                        out
                    };
                    val += mono([0; 4]);
                    for i in 0..4 {
                        let mut d = [0; 4];
                        d[i] = 1;
                        g[i] += mono(d);
                        for j in 0..4 {
                            let mut d = [0; 4];
                            d[i] += 1;
                            d[j] += 1;
                            h[i][j] += mono(d);
                        }
                    }
                }
                (val, g, h)
            }
        }
    }
}

/// `(1/√|g|) ∂_α(√|g| V^α(r, θ))` for a vector field depending on `r, θ` only.
fn divergence_rtheta(
    params: &KerrParams,
    maps: &RadialMaps,
    r: f64,
    th: f64,
    v: impl Fn(&MetricPoint) -> [f64; 4],
) -> Result<f64> {
    let g0 = ttilde_star_metric(params, maps, r, th)?;
    let mut err = None;
    let mut dens = |rr: f64, tt: f64, comp: usize| match ttilde_star_metric(params, maps, rr, tt) {
        Ok(m) => m.sqrt_abs_det * v(&m)[comp],
        Err(e) => {
            err.get_or_insert(e);
            0.0
        }
    };
    let dr = 1e-3 * r;
    let dth = 1e-3;
    let a = deriv6(|x| dens(x, th, R), r, dr);
    let b = deriv6(|y| dens(r, y, THETA), th, dth);
    if let Some(e) = err {
        return Err(e);
    }
    Ok((a + b) / g0.sqrt_abs_det)
}

/// Right-hand side of the divergence identity at `x0`.
pub fn divergence_rhs(
    params: &KerrParams,
    maps: &RadialMaps,
    triple: &MultiplierTriple,
    field: &AnalyticField,
    x0: [f64; 4],
) -> Result<f64> {
    let (r, th) = (x0[R], x0[THETA]);
    let g = ttilde_star_metric(params, maps, r, th)?;
    let (phi, d, hess) = field.eval(x0);
    let up = g.raise(d);

    // □φ = g^{αβ}∂_α∂_βφ + b^β∂_βφ, b^β = |g|^{-1/2}∂_α(|g|^{1/2} g^{αβ}).
    let mut box_phi = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            box_phi += g.g_upper[a][b] * hess[a][b];
        }
    }
    for (beta, db) in d.iter().enumerate() {
        let bb = divergence_rtheta(params, maps, r, th, |m| {
            let mut col = [0.0; 4];
            col[R] = m.g_upper[R][beta];
            col[THETA] = m.g_upper[THETA][beta];
            col
        })?;
        box_phi += bb * db;
    }

    // Deformation tensor π_αβ = X^μ∂_μ g_αβ + g_μβ ∂_α X^μ + g_αμ ∂_β X^μ.
    let x = triple.x(maps, r);
    let dx_dr: Vec<f64> = (0..4).map(|mu| deriv6(|rr| triple.x(maps, rr)[mu], r, 1e-3 * r)).collect();
    let mut dg_dr = [[0.0; 4]; 4];
    let mut dg_dth = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            dg_dr[a][b] = deriv6(
                |rr| ttilde_star_metric(params, maps, rr, th).map_or(f64::NAN, |m| m.g_lower[a][b]),
                r,
                1e-3 * r,
            );
            dg_dth[a][b] = deriv6(
                |tt| ttilde_star_metric(params, maps, r, tt).map_or(f64::NAN, |m| m.g_lower[a][b]),
                th,
                1e-3,
            );
        }
    }
    let mut pi = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            let mut v = x[R] * dg_dr[a][b] + x[THETA] * dg_dth[a][b];
            for mu in 0..4 {
                if a == R {
                    v += g.g_lower[mu][b] * dx_dr[mu];
                }
                if b == R {
                    v += g.g_lower[a][mu] * dx_dr[mu];
                }
            }
            pi[a][b] = v;
        }
    }
    let ql = energy_momentum(&g, d);
    let mut qpi = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            let qu: f64 = (0..4)
                .flat_map(|m| (0..4).map(move |n| (m, n)))
                .map(|(m, n)| g.g_upper[a][m] * g.g_upper[b][n] * ql[m][n])
                .sum();
            qpi += qu * pi[a][b];
        }
    }

    let q = triple.q(r);
    let m = triple.m(maps, r);
    let grad2: f64 = (0..4).map(|a| up[a] * d[a]).sum();
    let m_dphi: f64 = (0..4).map(|a| m[a] * up[a]).sum();
    let div_m = divergence_rtheta(params, maps, r, th, |pt| pt.raise(triple.m(maps, pt.r())))?;
    let box_q = divergence_rtheta(params, maps, r, th, |pt| {
        let mut dq = [0.0; 4];
        dq[R] = triple.q_prime(pt.r());
        pt.raise(dq)
    })?;
    let xphi: f64 = (0..4).map(|a| x[a] * d[a]).sum();
    let value = box_phi * (xphi + q * phi)
        + 0.5 * qpi
        + q * grad2
        + phi * m_dphi
        + (0.5 * div_m - 0.5 * box_q) * phi * phi;
    if !value.is_finite() {
        return Err(Error::Domain(format!("identity terms not finite at r = {r}, theta = {th}")));
    }
    Ok(value)
}

/// `|∇^αP_α − RHS|` at `x0`, with the divergence by 4th-order central
/// differences of `√|g| g^{αβ}P_β` (steps `h` in `t̃, r` and `h/r` in the angles).
pub fn divergence_residual(
    params: &KerrParams,
    maps: &RadialMaps,
    triple: &MultiplierTriple,
    field: &AnalyticField,
    x0: [f64; 4],
    h: f64,
) -> Result<f64> {
    let (r, th) = (x0[R], x0[THETA]);
    let steps = [h, h, h / r, h / r];
    if !(h > 0.0)
        || r - 2.0 * h <= params.r_plus()
        || r - 2.0 * h < 0.5 * triple.r2
        || th - 2.0 * steps[THETA] <= 0.0
        || th + 2.0 * steps[THETA] >= std::f64::consts::PI
    {
        return Err(Error::Domain(format!(
            "step h = {h} does not fit the stencil domain at r = {r}, theta = {th}"
        )));
    }
    let flux = |x: [f64; 4], alpha: usize| -> Result<f64> {
        let g = ttilde_star_metric(params, maps, x[R], x[THETA])?;
        let (phi, d, _) = field.eval(x);
        let p = contracted_current(&g, maps, triple, phi, d)?.p;
        Ok(g.sqrt_abs_det * (0..4).map(|b| g.g_upper[alpha][b] * p[b]).sum::<f64>())
    };
    let mut div = 0.0;
    for alpha in 0..4 {
        let at = |k: f64| {
            let mut x = x0;
            x[alpha] += k * steps[alpha];
            flux(x, alpha)
        };
        let d = (8.0 * (at(1.0)? - at(-1.0)?) - (at(2.0)? - at(-2.0)?)) / (12.0 * steps[alpha]);
        div += d;
    }
    let g0 = ttilde_star_metric(params, maps, r, th)?;
    let lhs = div / g0.sqrt_abs_det;
    Ok((lhs - divergence_rhs(params, maps, triple, field, x0)?).abs())
}

/// Residuals at `h`, `h/2`, `h/4` and the observed order `log₂(e₁/e₂)` of the
/// finest pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualStudy {
    pub steps: [f64; 3],
    pub residuals: [f64; 3],
    pub order: f64,
}

pub fn residual_study(
    params: &KerrParams,
    maps: &RadialMaps,
    triple: &MultiplierTriple,
    field: &AnalyticField,
    x0: [f64; 4],
    h: f64,
) -> Result<ResidualStudy> {
    let steps = [h, h / 2.0, h / 4.0];
    let mut res = [0.0; 3];
    for (i, &s) in steps.iter().enumerate() {
        res[i] = divergence_residual(params, maps, triple, field, x0, s)?;
    }
    Ok(ResidualStudy { steps, residuals: res, order: (res[1] / res[2]).log2() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_radial_maps, bl_metric};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(spin: f64) -> (KerrParams, RadialMaps) {
        let p = KerrParams::new(1.0, spin).unwrap();
        let m = build_radial_maps(&p, 8.0).unwrap();
        (p, m)
    }

    #[test]
    fn admissibility_examples() {
        assert!((admissibility(1.6, 0.05) - (0.9025 - 1.84)).abs() < 1e-12);
        assert!(MultiplierTriple::new(1.6, 0.05, 1.0, 20.0).is_ok());
        assert!(MultiplierTriple::new(2.0, 0.05, 1.0, 20.0).is_err());
        assert!(MultiplierTriple::new(0.0, 0.05, 1.0, 20.0).is_err());
        // γ = 1.9, δ = 0.9: 0.01 − 2(1 − 1.71) > 0.
        assert!(MultiplierTriple::new(1.9, 0.9, 1.0, 20.0).is_err());
    }

    #[test]
    fn energy_momentum_examples() {
        let (p, m) = setup(0.3);
        let g = ttilde_star_metric(&p, &m, 40.0, 1.0).unwrap();
        assert_eq!(energy_momentum(&g, [0.0; 4]), [[0.0; 4]; 4]);
        // Null covector: Q = dφ ⊗ dφ.
        let mut d = [0.0, 1.0, 0.0, 0.0];
        let (a, b, c) = (g.g_upper[T][T], 2.0 * g.g_upper[T][R], g.g_upper[R][R]);
        d[T] = (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        assert!(g.norm_upper(d).abs() < 1e-12);
        let q = energy_momentum(&g, d);
        for i in 0..4 {
            for j in 0..4 {
                assert!((q[i][j] - d[i] * d[j]).abs() < 1e-12);
                assert_eq!(q[i][j], q[j][i]);
            }
        }
        // Far out the metric is close to Minkowski: Q_tt ≈ ½ for dφ = dt.
        let far = bl_metric(&KerrParams::new(1.0, 0.0).unwrap(), 1e9, 1.0).unwrap();
        assert!((energy_momentum(&far, [1.0, 0.0, 0.0, 0.0])[T][T] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn zero_field_zero_current() {
        let (p, m) = setup(0.3);
        let t = MultiplierTriple::new(1.6, 0.05, 1.0, 20.0).unwrap();
        let g = ttilde_star_metric(&p, &m, 30.0, 1.0).unwrap();
        let c = contracted_current(&g, &m, &t, 0.0, [0.0; 4]).unwrap();
        assert_eq!(c.p, [0.0; 4]);
        assert_eq!(weighted_energy_integrand(&g, &m, &t, 0.0, [0.0; 4]).unwrap(), (0.0, 0.0));
        let inner = ttilde_star_metric(&p, &m, 5.0, 1.0).unwrap();
        assert!(contracted_current(&inner, &m, &t, 1.0, [0.0; 4]).is_err());
    }

    #[test]
    fn small_gamma_current_matches_direct_formula() {
        let (p, m) = setup(0.0);
        let t = MultiplierTriple::new(1e-6, 0.05, 1.0, 20.0).unwrap();
        let g = ttilde_star_metric(&p, &m, 30.0, 1.2).unwrap();
        let (phi, d) = (0.3, [0.2, -0.1, 0.05, 0.07]);
        let c = contracted_current(&g, &m, &t, phi, d).unwrap();
        // Independent evaluation: X ≈ ∂_t + ∂_r (r̃' = 1 here), q ≈ (1 − 2/r)/r, m ≈ 0.
        let r: f64 = 30.0;
        let n = g.norm_upper(d);
        let x = [1.0, 1.0 / m.rtilde_prime(r), 0.0, 0.0];
        let q = (1.0 - 2.0 / r) / r;
        let dq = -1.0 / (r * r) + 4.0 / (r * r * r);
        for a in 0..4 {
            let mut expect: f64 = (0..4).map(|b| (d[a] * d[b] - 0.5 * g.g_lower[a][b] * n) * x[b]).sum();
            expect += q * phi * d[a];
            if a == R {
                expect -= 0.5 * dq * phi * phi;
            }
            assert!((c.p[a] - expect).abs() < 1e-5, "{a}: {} vs {expect}", c.p[a]);
            assert!(c.p[a].is_finite());
        }
    }

    #[test]
    fn static_energy_density_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for spin in [0.0, 0.3] {
            let (p, m) = setup(spin);
            for _ in 0..1000 {
                let r = rng.gen_range(3.0..200.0);
                let th = rng.gen_range(0.05..3.09);
                let g = ttilde_star_metric(&p, &m, r, th).unwrap();
                let d: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
                assert!(static_energy_density(&g, d) >= 0.0, "r = {r}, th = {th}");
            }
        }
    }

    #[test]
    fn outgoing_pairing_tracks_weight() {
        // Outgoing null gradient at large r: pairing grows like r^γ |∂_vφ|².
        let (p, m) = setup(0.3);
        let t = MultiplierTriple::new(1.6, 0.05, 1.0, 20.0).unwrap();
        let mut ratios = vec![];
        for r in [50.0, 100.0, 200.0, 400.0, 800.0] {
            let g = ttilde_star_metric(&p, &m, r, 1.0).unwrap();
            // φ = f(v)/r with f' = 1: ∂_t φ = ∂_r̃ φ·r̃' ≈ 1/r.
            let d = [1.0 / r, m.rtilde_prime(r) / r, 0.0, 0.0];
            let (model, pair) = weighted_energy_integrand(&g, &m, &t, 0.0, d).unwrap();
            ratios.push(pair / model);
        }
        for w in ratios.windows(2) {
            assert!((w[1] / w[0] - 1.0).abs() < 0.2, "{ratios:?}");
        }
    }

    #[test]
    fn constant_field_residual_small() {
        let (p, m) = setup(0.3);
        let t = MultiplierTriple::new(1.6, 0.05, 1.0, 20.0).unwrap();
        let x0 = [0.0, 25.0, 0.4, 1.1];
        let r1 = divergence_residual(&p, &m, &t, &AnalyticField::Constant(0.7), x0, 0.2).unwrap();
        let r2 = divergence_residual(&p, &m, &t, &AnalyticField::Constant(0.7), x0, 0.1).unwrap();
        assert!(r2 < 1e-6 && r2 <= r1 * 0.2 + 1e-12, "{r1} {r2}");
    }

    #[test]
    fn polynomial_hessian_matches_differences() {
        let f = AnalyticField::cubic();
        let x = [0.3, 7.0, 0.5, 1.2];
        let (_, g, h) = f.eval(x);
        for i in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += 1e-5;
            xm[i] -= 1e-5;
            let (vp, gp, _) = f.eval(xp);
            let (vm, gm, _) = f.eval(xm);
            assert!(((vp - vm) / 2e-5 - g[i]).abs() < 1e-6);
            for j in 0..4 {
                assert!(((gp[j] - gm[j]) / 2e-5 - h[j][i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn divergence_identity_converges() {
        for spin in [0.0, 0.3] {
            let (p, m) = setup(spin);
            for r in [5.0, 20.0, 100.0] {
                let t = MultiplierTriple::new(1.6, 0.05, 1.0, DEFAULT_R2.min(0.9 * r)).unwrap();
                for f in [AnalyticField::cubic(), AnalyticField::oscillatory()] {
                    let s = residual_study(&p, &m, &t, &f, [0.0, r, 0.3, 1.1], 0.2).unwrap();
                    assert!(s.order >= 3.5, "a = {spin}, r = {r}: {s:?}");
                }
            }
        }
    }

    #[test]
    fn ramp_region_identity() {
        // Probe inside the cutoff ramp exercises χ' and χ''.
        let (p, m) = setup(0.3);
        let t = MultiplierTriple::new(1.6, 0.05, 1.0, 20.0).unwrap();
        let s = residual_study(&p, &m, &t, &AnalyticField::oscillatory(), [0.0, 15.0, 0.3, 1.1], 0.2).unwrap();
        assert!(s.order >= 3.5, "{s:?}");
    }

    #[test]
    fn oscillatory_ratio_at_005() {
        let (p, m) = setup(0.3);
        let t = MultiplierTriple::new(1.6, 0.05, 1.0, 18.0).unwrap();
        let f = AnalyticField::oscillatory();
        let a = divergence_residual(&p, &m, &t, &f, [0.0, 20.0, 0.3, 1.1], 0.05).unwrap();
        let b = divergence_residual(&p, &m, &t, &f, [0.0, 20.0, 0.3, 1.1], 0.025).unwrap();
        assert!(a / b >= 12.0, "{a} {b}");
    }

    #[test]
    fn oversized_step_is_domain_error() {
        let (p, m) = setup(0.3);
        let t = MultiplierTriple::new(1.6, 0.05, 1.0, 4.0).unwrap();
        let r = divergence_residual(&p, &m, &t, &AnalyticField::cubic(), [0.0, 5.0, 0.0, 0.05], 0.2);
        assert!(matches!(r, Err(Error::Domain(_))));
    }
}
