//! Wave-operator coefficients: the Regge–Wheeler reduction, the axisymmetric
//! `(t̃, r, θ)` form of `□_K`, the conjugated operator `P` and its decay
//! decomposition, and the power nonlinearity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    ttilde_star_metric, ttilde_star_metric_stencil, Chart, KerrParams, MetricPoint, RadialMaps,
    PHI, R, T, THETA,
};
use crate::stencil::{deriv4, deriv6};

/// Axis indices of the reduced `(t̃, r, θ)` coefficient arrays.
pub const AX_T: usize = 0;
pub const AX_R: usize = 1;
pub const AX_TH: usize = 2;
const FULL: [usize; 3] = [T, R, THETA];

/// Regge–Wheeler potential `(1 − 2M/r)(2M/r³ + ℓ(ℓ+1)/r²)`.
pub fn rw_potential(mass: f64, r: f64, ell: u32) -> f64 {
    let f = 1.0 - 2.0 * mass / r;
    let l = ell as f64;
    f * (2.0 * mass / (r * r * r) + l * (l + 1.0) / (r * r))
}

/// Same as [`rw_potential`] from the horizon offset `x = r − 2M`, accurate
/// where `r` rounds to `2M`.
pub fn rw_potential_offset(mass: f64, x: f64, ell: u32) -> f64 {
    let r = 2.0 * mass + x;
    let l = ell as f64;
    (x / r) * (2.0 * mass / (r * r * r) + l * (l + 1.0) / (r * r))
}

/// Right-hand side of `□_K φ = sign · φ^p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nonlinearity {
    pub p: u32,
    pub sign: i8,
}

impl Nonlinearity {
    pub fn new(p: u32, sign: i8) -> Result<Self> {
        if p < 3 {
            return Err(Error::Parameter(format!("power p must be an integer >= 3, got {p}")));
        }
        if sign != 1 && sign != -1 {
            return Err(Error::Parameter(format!("sign must be +1 or -1, got {sign}")));
        }
        Ok(Nonlinearity { p, sign })
    }

    /// With signature (−,+,+,+), `□φ = +φ^p` is defocusing for odd `p`.
    pub fn defocusing(p: u32) -> Result<Self> {
        Self::new(p, 1)
    }

    pub fn focusing(p: u32) -> Result<Self> {
        Self::new(p, -1)
    }

    #[inline(always)]
    pub fn apply(&self, phi: f64) -> f64 {
        apply_nonlinearity(self, phi)
    }
}

#[inline(always)]
pub fn apply_nonlinearity(nl: &Nonlinearity, phi: f64) -> f64 {
    let v = phi.powi(nl.p as i32);
    if nl.sign > 0 {
        v
    } else {
        -v
    }
}

/// Principal, first- and zeroth-order coefficients of an axisymmetric wave
/// operator `A^{αβ}∂_α∂_β + b^β∂_β + c`, indexed by [`AX_T`], [`AX_R`], [`AX_TH`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaveOpCoeffs {
    pub chart: Chart,
    pub a: [[f64; 3]; 3],
    pub b: [f64; 3],
    pub c: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorForm {
    /// `□_K` itself.
    Wave,
    /// The conjugated operator `P`, self-adjoint for `dt̃ dx̃`.
    Conjugated,
}

/// Radial and angular steps for differencing metric functions at `(r, θ)`.
fn fd_steps(params: &KerrParams, r: f64, theta: f64) -> Result<(f64, f64)> {
    let dr = 1e-3 * r.max(params.mass);
    let dth = 1e-3;
    if !(theta - 3.0 * dth > 0.0 && theta + 3.0 * dth < std::f64::consts::PI) {
        return Err(Error::Domain(format!(
            "theta = {theta} too close to the axis for the coefficient stencil"
        )));
    }
    if !(r - 3.0 * dr > params.spin * params.spin / params.r_plus()) {
        return Err(Error::Domain(format!("radial stencil at r = {r} crosses r_-")));
    }
    Ok((dr, dth))
}

fn reduced(g: &MetricPoint) -> [[f64; 3]; 3] {
    let mut a = [[0.0; 3]; 3];
    for (i, &fi) in FULL.iter().enumerate() {
        for (j, &fj) in FULL.iter().enumerate() {
            a[i][j] = g.g_upper[fi][fj];
        }
    }
    a
}

/// Coefficients of `□_K` at the point, in the `(t̃, r, θ)` chart.
pub fn axisym_coeffs(
    params: &KerrParams,
    maps: &RadialMaps,
    point: &MetricPoint,
) -> Result<WaveOpCoeffs> {
    coeffs_with_form(params, maps, point.r(), point.theta(), OperatorForm::Wave)
}

/// Coefficients in either form at `(r, θ)`.
pub fn coeffs_with_form(
    params: &KerrParams,
    maps: &RadialMaps,
    r: f64,
    theta: f64,
    form: OperatorForm,
) -> Result<WaveOpCoeffs> {
    let g = ttilde_star_metric(params, maps, r, theta)?;
    if !(g.g_upper[T][T] < 0.0) {
        return Err(Error::Slicing { r, theta, value: g.g_upper[T][T] });
    }
    let (dr, dth) = fd_steps(params, r, theta)?;
    let at = |rr: f64, th: f64| ttilde_star_metric_stencil(params, maps, rr, th);

    match form {
        OperatorForm::Wave => {
            // b^β = |g|^{-1/2} ∂_α(|g|^{1/2} g^{αβ}); only r and θ derivatives survive.
            let mut b = [0.0; 3];
            let mut err = None;
            for (k, &fk) in FULL.iter().enumerate() {
                let d_r = deriv6(
                    |x| match at(x, theta) {
                        Ok(m) => m.sqrt_abs_det * m.g_upper[R][fk],
                        Err(e) => {
                            err.get_or_insert(e);
                            0.0
                        }
                    },
                    r,
                    dr,
                );
                let d_th = deriv6(
                    |y| match at(r, y) {
                        Ok(m) => m.sqrt_abs_det * m.g_upper[THETA][fk],
                        Err(e) => {
                            err.get_or_insert(e);
                            0.0
                        }
                    },
                    theta,
                    dth,
                );
                b[k] = (d_r + d_th) / g.sqrt_abs_det;
            }
            if let Some(e) = err {
                return Err(e);
            }
            Ok(WaveOpCoeffs { chart: Chart::TtildeStar, a: reduced(&g), b, c: 0.0 })
        }
        OperatorForm::Conjugated => {
            // P = ∂(ĝ ∂) + V in (t̃, x̃), x̃ = r̃ω; written in (t̃, r, θ) with the
            // flat density ϖ = r̃² r̃' sinθ.
            let flat = |x: f64, y: f64| {
                let rt = maps.rtilde(x);
                rt * rt * maps.rtilde_prime(x) * y.sin()
            };
            let n = -g.g_upper[T][T];
            let mut a = reduced(&g);
            for row in a.iter_mut() {
                for v in row.iter_mut() {
                    *v /= n;
                }
            }
            let mut b = [0.0; 3];
            let mut err = None;
            for (k, &fk) in FULL.iter().enumerate() {
                let d_r = deriv6(
                    |x| match at(x, theta) {
                        Ok(m) => flat(x, theta) * m.g_upper[R][fk] / (-m.g_upper[T][T]),
                        Err(e) => {
                            err.get_or_insert(e);
                            0.0
                        }
                    },
                    r,
                    dr,
                );
                let d_th = deriv6(
                    |y| match at(r, y) {
                        Ok(m) => flat(r, y) * m.g_upper[THETA][fk] / (-m.g_upper[T][T]),
                        Err(e) => {
                            err.get_or_insert(e);
                            0.0
                        }
                    },
                    theta,
                    dth,
                );
                b[k] = (d_r + d_th) / flat(r, theta);
            }
            if let Some(e) = err {
                return Err(e);
            }
            let c = conjugation_potential(params, maps, r, theta)?;
            Ok(WaveOpCoeffs { chart: Chart::TtildeStar, a, b, c })
        }
    }
}

/// Weight `w = (n ϖ_g)^{-1/2}` with `n = −g^{t̃t̃}` and `ϖ_g = ρ²/(r̃' r̃²)` the
/// volume density relative to `dt̃ dx̃`.
fn conjugation_weight(params: &KerrParams, maps: &RadialMaps, r: f64, theta: f64) -> Result<f64> {
    let g = ttilde_star_metric_stencil(params, maps, r, theta)?;
    let rt = maps.rtilde(r);
    let density = params.rho2(r, theta) / (maps.rtilde_prime(r) * rt * rt);
    Ok((-g.g_upper[T][T] * density).powf(-0.5))
}

/// `V = w □_K w` with `w` from [`conjugation_weight`], by nested 4th-order
/// differences.
pub fn conjugation_potential(
    params: &KerrParams,
    maps: &RadialMaps,
    r: f64,
    theta: f64,
) -> Result<f64> {
    let dr = 1e-2 * r.max(params.mass);
    let dth = 2e-2_f64.min(theta / 5.0).min((std::f64::consts::PI - theta) / 5.0);
    if !(r - 4.0 * dr > params.r_e * 0.5) {
        return Err(Error::Domain(format!("potential stencil at r = {r} leaves the chart")));
    }
    let mut err = None;
    let mut w = |x: f64, y: f64| match conjugation_weight(params, maps, x, y) {
        Ok(v) => v,
        Err(e) => {
            err.get_or_insert(e);
            0.0
        }
    };
    let mut flux_r = |x: f64| {
        let g = ttilde_star_metric_stencil(params, maps, x, theta).map(|m| m.sqrt_abs_det * m.g_upper[R][R]);
        let dw = deriv4(|xx| w(xx, theta), x, dr);
        g.map(|v| v * dw).unwrap_or(f64::NAN)
    };
    let div_r = deriv4(&mut flux_r, r, dr);
    let w2 = |x: f64, y: f64| conjugation_weight(params, maps, x, y).unwrap_or(f64::NAN);
    let mut flux_th = |y: f64| {
        let g = ttilde_star_metric_stencil(params, maps, r, y).map(|m| m.sqrt_abs_det * m.g_upper[THETA][THETA]);
        let dw = deriv4(|yy| w2(r, yy), y, dth);
        g.map(|v| v * dw).unwrap_or(f64::NAN)
    };
    let div_th = deriv4(&mut flux_th, theta, dth);
    if let Some(e) = err {
        return Err(e);
    }
    let g = ttilde_star_metric(params, maps, r, theta)?;
    let w0 = conjugation_weight(params, maps, r, theta)?;
    let v = w0 * (div_r + div_th) / g.sqrt_abs_det;
    if !v.is_finite() {
        return Err(Error::Domain(format!("potential not finite at r = {r}, theta = {theta}")));
    }
    Ok(v)
}

/// Conjugated inverse metric `ĝ = g/(−g^{t̃t̃})` in `(t̃, r̃, φ, θ)` components.
fn hat_metric_rtilde(params: &KerrParams, maps: &RadialMaps, r: f64, theta: f64) -> Result<[[f64; 4]; 4]> {
    let g = ttilde_star_metric(params, maps, r, theta)?;
    let n = -g.g_upper[T][T];
    let jac = [1.0, maps.rtilde_prime(r), 1.0, 1.0];
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = g.g_upper[i][j] * jac[i] * jac[j] / n;
        }
    }
    Ok(out)
}

/// One row of the conjugation decay report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConjugationRow {
    pub r: f64,
    pub r3_glr: f64,
    pub r3_v: f64,
    pub r2_gsr_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConjugationReport {
    pub rows: Vec<ConjugationRow>,
    /// Log–log slope of each weighted quantity over the outer half of the
    /// samples: `(r3_glr, r3_V, r2_gsr)`.
    pub growth_slopes: [f64; 3],
    /// Power-law growth detected (slope above [`GROWTH_SLOPE_LIMIT`]).
    pub unbounded: [bool; 3],
}

/// Slopes above this count as power-law growth; logarithmic drifts stay below.
pub const GROWTH_SLOPE_LIMIT: f64 = 0.2;

const REPORT_THETAS: [f64; 4] = [0.3, 0.8, 1.3, std::f64::consts::FRAC_PI_2];

/// Decay report for `P − □`: the long-range angular coefficient, the
/// potential and the Kerr short-range part along `sample_radii` (each ≥ 5M).
pub fn conjugation_check(
    params: &KerrParams,
    maps: &RadialMaps,
    sample_radii: &[f64],
) -> Result<ConjugationReport> {
    let schw = params.schwarzschild_limit();
    let mut rows = Vec::with_capacity(sample_radii.len());
    for &r in sample_radii {
        if !(r >= 5.0 * params.mass) {
            return Err(Error::Parameter(format!("sample radius {r} below 5M")));
        }
        let rt = maps.rtilde(r);
        let hs = hat_metric_rtilde(&schw, maps, r, std::f64::consts::FRAC_PI_2)?;
        let glr = hs[THETA][THETA] - 1.0 / (rt * rt);
        let mut v_max: f64 = 0.0;
        let mut gsr_max: f64 = 0.0;
        for &th in &REPORT_THETAS {
            v_max = v_max.max(conjugation_potential(params, maps, r, th)?.abs());
            if params.spin != 0.0 {
                let hk = hat_metric_rtilde(params, maps, r, th)?;
                let hs = hat_metric_rtilde(&schw, maps, r, th)?;
                for i in [T, R, PHI, THETA] {
                    for j in [T, R, PHI, THETA] {
                        gsr_max = gsr_max.max((hk[i][j] - hs[i][j]).abs());
                    }
                }
            }
        }
        rows.push(ConjugationRow {
            r,
            r3_glr: r.powi(3) * glr.abs(),
            r3_v: r.powi(3) * v_max,
            r2_gsr_max: r * r * gsr_max,
        });
    }
    let half = rows.len() / 2;
    let tail = &rows[half..];
    let slope = |sel: fn(&ConjugationRow) -> f64| -> f64 {
        let pts: Vec<(f64, f64)> = tail
            .iter()
            .filter(|row| sel(row) > 0.0)
            .map(|row| (row.r.ln(), sel(row).ln()))
            .collect();
        if pts.len() < 2 {
            return 0.0;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    };
    let growth_slopes = [slope(|r| r.r3_glr), slope(|r| r.r3_v), slope(|r| r.r2_gsr_max)];
    let unbounded = growth_slopes.map(|s| s > GROWTH_SLOPE_LIMIT);
    Ok(ConjugationReport { rows, growth_slopes, unbounded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{bl_metric, build_radial_maps, tortoise};
    use std::f64::consts::PI;

    fn schw() -> (KerrParams, RadialMaps) {
        let p = KerrParams::schwarzschild(1.0).unwrap();
        let m = build_radial_maps(&p, 8.0).unwrap();
        (p, m)
    }

    #[test]
    fn rw_potential_values() {
        assert_eq!(rw_potential(1.0, 2.0, 0), 0.0);
        assert!(rw_potential(1.0, 1e8, 0) < 1e-23);
        let peak = rw_potential(1.0, 8.0 / 3.0, 0);
        assert!((peak - 27.0 / 1024.0).abs() < 1e-15);
        for i in 1..2000 {
            let r = 2.0 + i as f64 * 0.01;
            assert!(rw_potential(1.0, r, 0) <= peak + 1e-16);
        }
        assert!((rw_potential_offset(1.0, 2.0, 1) - rw_potential(1.0, 4.0, 1)).abs() < 1e-16);
    }

    #[test]
    fn nonlinearity_values() {
        let p3 = Nonlinearity::new(3, 1).unwrap();
        assert_eq!(p3.apply(2.0), 8.0);
        assert_eq!(Nonlinearity::new(5, -1).unwrap().apply(-1.0), 1.0);
        assert_eq!(Nonlinearity::new(4, 1).unwrap().apply(0.0), 0.0);
        assert!(Nonlinearity::new(2, 1).is_err());
        assert!(Nonlinearity::new(3, 0).is_err());
        assert_eq!(Nonlinearity::defocusing(3).unwrap().sign, 1);
    }

    #[test]
    fn coeff_examples() {
        let (p, maps) = schw();
        let g = ttilde_star_metric(&p, &maps, 10.0, PI / 2.0).unwrap();
        let c = axisym_coeffs(&p, &maps, &g).unwrap();
        assert!((c.a[AX_TH][AX_TH] - 0.01).abs() < 1e-15);
        assert!(c.a[AX_T][AX_T] < 0.0);
        // b^r = r^{-2}∂_r(r² f) = 2/r − 2M/r²
        for r in [50.0, 400.0] {
            let g = ttilde_star_metric(&p, &maps, r, 1.0).unwrap();
            let c = axisym_coeffs(&p, &maps, &g).unwrap();
            assert!((c.b[AX_R] - (2.0 / r - 2.0 / (r * r))).abs() < 1e-9 * (2.0 / r));
            assert!((c.b[AX_TH] - 1.0f64.cos() / 1.0f64.sin() / (r * r)).abs() < 1e-10);
        }
    }

    #[test]
    fn coeffs_equatorially_symmetric() {
        let p = KerrParams::new(1.0, 0.3).unwrap();
        let maps = build_radial_maps(&p, 8.0).unwrap();
        for r in [1.0, 2.3, 12.0] {
            let up = coeffs_with_form(&p, &maps, r, 0.6, OperatorForm::Wave).unwrap();
            let dn = coeffs_with_form(&p, &maps, r, PI - 0.6, OperatorForm::Wave).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    assert!((up.a[i][j] - dn.a[i][j]).abs() < 1e-14);
                }
            }
            assert!((up.b[AX_R] - dn.b[AX_R]).abs() < 1e-9);
            assert!((up.b[AX_TH] + dn.b[AX_TH]).abs() < 1e-9);
        }
    }

    #[test]
    fn wave_coeffs_match_bl_divergence_outside_blend() {
        // For r >= 5M/2 the t̃ chart is BL time, so b^r equals the BL value.
        let p = KerrParams::new(1.0, 0.3).unwrap();
        let maps = build_radial_maps(&p, 8.0).unwrap();
        let (r, th) = (6.0, 1.1);
        let c = coeffs_with_form(&p, &maps, r, th, OperatorForm::Wave).unwrap();
        let h = 1e-4;
        let f = |x: f64| {
            let g = bl_metric(&p, x, th).unwrap();
            g.sqrt_abs_det * g.g_upper[R][R]
        };
        let expect = (f(r + h) - f(r - h)) / (2.0 * h) / bl_metric(&p, r, th).unwrap().sqrt_abs_det;
        assert!((c.b[AX_R] - expect).abs() < 1e-7);
    }

    #[test]
    fn excision_point_coeffs_finite() {
        let p = KerrParams::new(1.0, 0.3).unwrap();
        let maps = build_radial_maps(&p, 8.0).unwrap();
        let c = coeffs_with_form(&p, &maps, 1.0, 0.2, OperatorForm::Wave).unwrap();
        assert!(c.b.iter().all(|v| v.is_finite()));
        assert!(coeffs_with_form(&p, &maps, 5.0, 1e-4, OperatorForm::Wave).is_err());
    }

    #[test]
    fn conjugation_report_schwarzschild() {
        let (p, maps) = schw();
        let radii: Vec<f64> = (0..25).map(|i| 10.0 * 10f64.powf(i as f64 / 8.0)).collect();
        let rep = conjugation_check(&p, &maps, &radii).unwrap();
        assert!(rep.rows.iter().all(|r| r.r2_gsr_max == 0.0));
        assert!(!rep.unbounded[1], "V slope {}", rep.growth_slopes[1]);
        assert!(!rep.unbounded[0], "g_lr slope {}", rep.growth_slopes[0]);
        // far out, g_lr = f/r² − 1/r*²
        let last = rep.rows.last().unwrap();
        let r = last.r;
        let rs = tortoise(1.0, r);
        let expect = r.powi(3) * ((1.0 - 2.0 / r) / (r * r) - 1.0 / (rs * rs)).abs();
        assert!((last.r3_glr / expect - 1.0).abs() < 1e-8);
    }

    #[test]
    fn conjugation_report_kerr_bounded() {
        let p = KerrParams::new(1.0, 0.3).unwrap();
        let maps = build_radial_maps(&p, 8.0).unwrap();
        let radii: Vec<f64> = (0..25).map(|i| 10.0 * 10f64.powf(i as f64 / 8.0)).collect();
        let rep = conjugation_check(&p, &maps, &radii).unwrap();
        assert!(rep.rows.iter().all(|r| r.r2_gsr_max.is_finite() && r.r3_v.is_finite()));
        assert_eq!(rep.unbounded, [false, false, false], "{:?}", rep.growth_slopes);
    }

    #[test]
    fn conjugated_potential_matches_weight_identity() {
        // Check V against an independent evaluation of w·□w through the
        // divergence coefficients of □: □w = A^{ij}∂_i∂_j w + b^j ∂_j w.
        let p = KerrParams::new(1.0, 0.3).unwrap();
        let maps = build_radial_maps(&p, 8.0).unwrap();
        let (r, th) = (30.0, 0.9);
        let c = coeffs_with_form(&p, &maps, r, th, OperatorForm::Wave).unwrap();
        let w = |x: f64, y: f64| conjugation_weight(&p, &maps, x, y).unwrap();
        let (hr, ht) = (0.05, 0.01);
        let wrr = (w(r + hr, th) - 2.0 * w(r, th) + w(r - hr, th)) / (hr * hr);
        let wtt = (w(r, th + ht) - 2.0 * w(r, th) + w(r, th - ht)) / (ht * ht);
        let wr = (w(r + hr, th) - w(r - hr, th)) / (2.0 * hr);
        let wt = (w(r, th + ht) - w(r, th - ht)) / (2.0 * ht);
        let boxw = c.a[AX_R][AX_R] * wrr + c.a[AX_TH][AX_TH] * wtt + c.b[AX_R] * wr + c.b[AX_TH] * wt;
        let v = conjugation_potential(&p, &maps, r, th).unwrap();
        assert!((v - w(r, th) * boxw).abs() < 1e-3 * v.abs() + 1e-9, "{v} vs {}", w(r, th) * boxw);
    }

    /// Non-divergence application of `a^{ij}∂_i∂_j + b^j∂_j` on a periodic
    /// square, with `b^j = ∂_i a^{ij}` differenced from the tables.
    fn periodic_apply(a: &[[Vec<f64>; 2]; 2], u: &[f64], n: usize, h: f64) -> Vec<f64> {
        let idx = |i: isize, j: isize| (i.rem_euclid(n as isize) as usize) * n + j.rem_euclid(n as isize) as usize;
        let d1 = |f: &[f64], i: isize, j: isize, dir: usize| {
            let (di, dj) = if dir == 0 { (1, 0) } else { (0, 1) };
            (f[idx(i - 2 * di, j - 2 * dj)] - 8.0 * f[idx(i - di, j - dj)] + 8.0 * f[idx(i + di, j + dj)]
                - f[idx(i + 2 * di, j + 2 * dj)])
                / (12.0 * h)
        };
        let mut du = [vec![0.0; n * n], vec![0.0; n * n]];
        for i in 0..n as isize {
            for j in 0..n as isize {
                for (d, out) in du.iter_mut().enumerate() {
                    out[idx(i, j)] = d1(u, i, j, d);
                }
            }
        }
        let mut out = vec![0.0; n * n];
        for i in 0..n as isize {
            for j in 0..n as isize {
                let k = idx(i, j);
                let mut s = 0.0;
                for x in 0..2 {
                    for y in 0..2 {
                        // ∂_x∂_y u by applying d1 twice
                        s += a[x][y][k] * d1(&du[y], i, j, x);
                    }
                }
                for y in 0..2 {
                    let b = d1(&a[0][y], i, j, 0) + d1(&a[1][y], i, j, 1);
                    s += b * du[y][k];
                }
                out[k] = s;
            }
        }
        out
    }

    fn asymmetry(n: usize) -> f64 {
        let h = 2.0 * PI / n as f64;
        let grid = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
            (0..n * n).map(|k| f((k / n) as f64 * h, (k % n) as f64 * h)).collect()
        };
        let a00 = grid(&|x, y| 2.0 + 0.5 * (x + 0.3).sin() * y.cos());
        let a11 = grid(&|x, y| 1.5 + 0.4 * (2.0 * y).sin() + 0.2 * x.cos());
        let a01 = grid(&|x, y| 0.3 * (x - y).sin());
        let a = [[a00, a01.clone()], [a01, a11]];
        let u = grid(&|x, y| (x.sin() + 0.5 * (2.0 * y).cos()).exp());
        let v = grid(&|x, y| (x + 2.0 * y).cos() * (1.0 + 0.3 * y.sin()));
        let lu = periodic_apply(&a, &u, n, h);
        let lv = periodic_apply(&a, &v, n, h);
        (0..n * n).map(|k| u[k] * lv[k] - v[k] * lu[k]).sum::<f64>().abs() * h * h
    }

    #[test]
    fn self_adjointness_surrogate_converges() {
        let e: Vec<f64> = [16, 32, 64].iter().map(|&n| asymmetry(n)).collect();
        assert!(e[2] < e[1] && e[1] < e[0], "{e:?}");
        let order = (e[1] / e[2]).log2();
        assert!(order > 3.5, "order {order}, {e:?}");
    }
}
