//! Kerr/Schwarzschild metric data in the Boyer–Lindquist, ingoing Kerr-star
//! and horizon-penetrating `t̃` charts, together with the radial coordinate
//! machinery (`r*`, `r*_K`, the slicing function `μ` and the hybrid radius `r̃`).
//!
//! Coordinates are always ordered `(t, r, φ, θ)`; use the index constants
//! [`T`], [`R`], [`PHI`], [`THETA`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::ramps::{smoothstep5, smoothstep5_prime};

pub const T: usize = 0;
pub const R: usize = 1;
pub const PHI: usize = 2;
pub const THETA: usize = 3;

pub type Mat4 = [[f64; 4]; 4];

/// Largest admissible `|a| / M`.
pub const MAX_SPIN_RATIO: f64 = 0.5;

/// Residual above which a numerically inverted metric is rejected.
pub const INVERSION_TOLERANCE: f64 = 1e-10;

/// Mass and spin of the background, with the configured excision radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KerrParams {
    pub mass: f64,
    pub spin: f64,
    pub r_e: f64,
}

/// Roots of `Δ` and the excision radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HorizonData {
    pub r_plus: f64,
    pub r_minus: f64,
    pub r_e: f64,
}

impl KerrParams {
    /// Background with the default excision radius `r_e = M`.
    pub fn new(mass: f64, spin: f64) -> Result<Self> {
        Self::with_excision(mass, spin, mass)
    }

    pub fn schwarzschild(mass: f64) -> Result<Self> {
        Self::new(mass, 0.0)
    }

    pub fn with_excision(mass: f64, spin: f64, r_e: f64) -> Result<Self> {
        let p = KerrParams { mass, spin, r_e };
        let h = horizon_radii(&p)?;
        if !(h.r_minus < r_e && r_e < h.r_plus) {
            return Err(Error::Parameter(format!(
                "excision radius r_e = {r_e} must satisfy r_- = {} < r_e < r_+ = {}",
                h.r_minus, h.r_plus
            )));
        }
        Ok(p)
    }

    pub fn delta(&self, r: f64) -> f64 {
        r * r - 2.0 * self.mass * r + self.spin * self.spin
    }

    pub fn rho2(&self, r: f64, theta: f64) -> f64 {
        let c = theta.cos();
        r * r + self.spin * self.spin * c * c
    }

    pub fn r_plus(&self) -> f64 {
        self.mass + (self.mass * self.mass - self.spin * self.spin).sqrt()
    }

    /// The same mass with zero spin.
    pub fn schwarzschild_limit(&self) -> KerrParams {
        KerrParams { spin: 0.0, ..*self }
    }
}

/// Both roots of `Δ = r² − 2Mr + a²` and the configured `r_e`.
pub fn horizon_radii(params: &KerrParams) -> Result<HorizonData> {
    let (m, a) = (params.mass, params.spin);
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::Parameter(format!("mass must be positive, got {m}")));
    }
    if !a.is_finite() || a.abs() > MAX_SPIN_RATIO * m {
        return Err(Error::SpinRegime { spin: a, limit: MAX_SPIN_RATIO * m });
    }
    let r_plus = m + (m * m - a * a).sqrt();
    // r_+ r_- = a², avoids cancellation for small a.
    let r_minus = a * a / r_plus;
    Ok(HorizonData { r_plus, r_minus, r_e: params.r_e })
}

pub fn delta_rho2(params: &KerrParams, r: f64, theta: f64) -> (f64, f64) {
    (params.delta(r), params.rho2(r, theta))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chart {
    BoyerLindquist,
    KerrStar,
    TtildeStar,
}

/// Metric components at one point of a chart.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricPoint {
    pub chart: Chart,
    pub coords: [f64; 4],
    pub g_lower: Mat4,
    pub g_upper: Mat4,
    pub sqrt_abs_det: f64,
}

impl MetricPoint {
    pub fn r(&self) -> f64 {
        self.coords[R]
    }

    pub fn theta(&self) -> f64 {
        self.coords[THETA]
    }

    /// `max |g·g⁻¹ − I|`, normalised by the magnitude of the products.
    pub fn inverse_residual(&self) -> f64 {
        identity_residual(&self.g_lower, &self.g_upper)
    }

    pub fn raise(&self, w: [f64; 4]) -> [f64; 4] {
        mat_vec(&self.g_upper, w)
    }

    pub fn lower(&self, v: [f64; 4]) -> [f64; 4] {
        mat_vec(&self.g_lower, v)
    }

    /// `g^{αβ} w_α w_β`.
    pub fn norm_upper(&self, w: [f64; 4]) -> f64 {
        quad_form(&self.g_upper, w)
    }
}

pub(crate) fn mat_vec(m: &Mat4, v: [f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (i, row) in m.iter().enumerate() {
        out[i] = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
    }
    out
}

pub(crate) fn quad_form(m: &Mat4, w: [f64; 4]) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            s += m[i][j] * w[i] * w[j];
        }
    }
    s
}

pub fn identity_residual(a: &Mat4, b: &Mat4) -> f64 {
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let mut s = 0.0;
            let mut m = 0.0;
            for k in 0..4 {
                s += a[i][k] * b[k][j];
                m += (a[i][k] * b[k][j]).abs();
            }
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((s - target).abs());
            scale = scale.max(m);
        }
    }
    worst / scale.max(1.0)
}

/// Gauss–Jordan inversion with partial pivoting. Returns `None` for a
/// numerically singular matrix.
pub fn invert4(m: &Mat4) -> Option<Mat4> {
    let mut a = *m;
    let mut inv = [[0.0; 4]; 4];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < f64::MIN_POSITIVE * 1e8 {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        for k in 0..4 {
            a[col][k] /= p;
            inv[col][k] /= p;
        }
        for row in 0..4 {
            if row != col {
                let f = a[row][col];
                if f != 0.0 {
                    for k in 0..4 {
                        a[row][k] -= f * a[col][k];
                        inv[row][k] -= f * inv[col][k];
                    }
                }
            }
        }
    }
    Some(inv)
}

fn sin_checked(theta: f64) -> Result<f64> {
    let s = theta.sin();
    if s == 0.0 || !s.is_finite() {
        return Err(Error::ChartDomain(format!(
            "theta = {theta} lies on the symmetry axis"
        )));
    }
    Ok(s)
}

/// Boyer–Lindquist components from the closed forms, for `r > r_+`.
pub fn bl_metric(params: &KerrParams, r: f64, theta: f64) -> Result<MetricPoint> {
    let h = horizon_radii(params)?;
    if !(r > h.r_plus) {
        return Err(Error::ChartDomain(format!(
            "Boyer-Lindquist chart requires r > r_+ = {}, got r = {r}",
            h.r_plus
        )));
    }
    let s = sin_checked(theta)?;
    let (m, a) = (params.mass, params.spin);
    let s2 = s * s;
    let (delta, rho2) = delta_rho2(params, r, theta);
    let sigma = (r * r + a * a).powi(2) - a * a * delta * s2;

    let mut g = [[0.0; 4]; 4];
    g[T][T] = -(delta - a * a * s2) / rho2;
    g[T][PHI] = -2.0 * m * a * r * s2 / rho2;
    g[PHI][T] = g[T][PHI];
    g[R][R] = rho2 / delta;
    g[PHI][PHI] = sigma * s2 / rho2;
    g[THETA][THETA] = rho2;

    let mut gi = [[0.0; 4]; 4];
    gi[T][T] = -sigma / (rho2 * delta);
    gi[T][PHI] = -2.0 * m * a * r / (rho2 * delta);
    gi[PHI][T] = gi[T][PHI];
    gi[R][R] = delta / rho2;
    gi[PHI][PHI] = (delta - a * a * s2) / (rho2 * delta * s2);
    gi[THETA][THETA] = 1.0 / rho2;

    Ok(MetricPoint {
        chart: Chart::BoyerLindquist,
        coords: [0.0, r, 0.0, theta],
        g_lower: g,
        g_upper: gi,
        sqrt_abs_det: rho2 * s.abs(),
    })
}

/// Lower-index components of the `(v_+ − μ, r, φ_+, θ)` line element for a
/// given slope `μ'(r)`. `μ' = 0` is the ingoing Kerr-star chart.
fn sliced_lower(params: &KerrParams, mu_prime: f64, r: f64, theta: f64, s: f64) -> Mat4 {
    let (m, a) = (params.mass, params.spin);
    let s2 = s * s;
    let (delta, rho2) = delta_rho2(params, r, theta);
    let c = 1.0 - 2.0 * m * r / rho2;
    let mut g = [[0.0; 4]; 4];
    g[T][T] = -c;
    g[T][R] = 1.0 - c * mu_prime;
    g[R][T] = g[T][R];
    g[T][PHI] = -2.0 * a * m * r * s2 / rho2;
    g[PHI][T] = g[T][PHI];
    g[R][R] = 2.0 * mu_prime - c * mu_prime * mu_prime;
    g[R][PHI] = -a * (1.0 + 2.0 * m * r * mu_prime / rho2) * s2;
    g[PHI][R] = g[R][PHI];
    g[THETA][THETA] = rho2;
    g[PHI][PHI] = ((r * r + a * a).powi(2) - delta * a * a * s2) * s2 / rho2;
    g
}

fn sliced_point(
    params: &KerrParams,
    chart: Chart,
    mu_prime: f64,
    r: f64,
    theta: f64,
) -> Result<MetricPoint> {
    if !(r >= params.r_e) || !(r > 0.0) {
        return Err(Error::ChartDomain(format!(
            "horizon-penetrating chart requires r >= r_e = {}, got r = {r}",
            params.r_e
        )));
    }
    sliced_point_raw(params, chart, mu_prime, r, theta)
}

/// As [`sliced_point`] but only requires `r > r_-`; used by difference
/// stencils centred near the excision radius.
fn sliced_point_raw(
    params: &KerrParams,
    chart: Chart,
    mu_prime: f64,
    r: f64,
    theta: f64,
) -> Result<MetricPoint> {
    let r_minus = params.spin * params.spin / params.r_plus();
    if !(r > r_minus) {
        return Err(Error::ChartDomain(format!("r = {r} is not outside r_- = {r_minus}")));
    }
    let s = sin_checked(theta)?;
    let g = sliced_lower(params, mu_prime, r, theta, s);
    let gi = invert4(&g).ok_or(Error::Conditioning(f64::INFINITY))?;
    let res = identity_residual(&g, &gi);
    if !(res <= INVERSION_TOLERANCE) {
        return Err(Error::Conditioning(res));
    }
    Ok(MetricPoint {
        chart,
        coords: [0.0, r, 0.0, theta],
        g_lower: g,
        g_upper: gi,
        sqrt_abs_det: params.rho2(r, theta) * s.abs(),
    })
}

/// Metric in the ingoing `(v_+, r, φ_+, θ)` chart.
pub fn kerr_star_metric(params: &KerrParams, r: f64, theta: f64) -> Result<MetricPoint> {
    sliced_point(params, Chart::KerrStar, 0.0, r, theta)
}

/// Metric in the `(t̃, r, φ_+, θ)` chart; the inverse is computed numerically.
pub fn ttilde_star_metric(
    params: &KerrParams,
    maps: &RadialMaps,
    r: f64,
    theta: f64,
) -> Result<MetricPoint> {
    sliced_point(params, Chart::TtildeStar, maps.mu_prime(r), r, theta)
}

pub(crate) fn ttilde_star_metric_stencil(
    params: &KerrParams,
    maps: &RadialMaps,
    r: f64,
    theta: f64,
) -> Result<MetricPoint> {
    sliced_point_raw(params, Chart::TtildeStar, maps.mu_prime(r), r, theta)
}

/// Regge–Wheeler coordinate `r* = r + 2M log(r − 2M)`; NaN for `r <= 2M`.
pub fn tortoise(mass: f64, r: f64) -> f64 {
    if r > 2.0 * mass {
        r + 2.0 * mass * (r - 2.0 * mass).ln()
    } else {
        f64::NAN
    }
}

/// `r*` as a function of the horizon offset `x = r − 2M`.
pub fn tortoise_from_offset(mass: f64, x: f64) -> f64 {
    2.0 * mass + x + 2.0 * mass * x.ln()
}

/// Horizon offset `x = r − 2M` with `r*(2M + x) = rstar`.
///
/// Works in `y = ln x`, where the residual is convex and increasing, so
/// Newton from the right converges monotonically. The offset keeps full
/// relative precision deep in the near-horizon region where `r` itself
/// rounds to `2M`.
pub fn invert_tortoise_offset(mass: f64, rstar: f64) -> f64 {
    let two_m = 2.0 * mass;
    let f = |y: f64| y.exp() + two_m + two_m * y - rstar;
    let mut y = (rstar.abs() + two_m + 1.0).ln();
    for _ in 0..200 {
        let fy = f(y);
        let step = fy / (y.exp() + two_m);
        y -= step;
        if step.abs() <= 1e-15 * y.abs().max(1.0) {
            break;
        }
    }
    y.exp()
}

/// `smoothstep9(z)/z` on `[0, 1]`.
fn s9_over_z(z: f64) -> f64 {
    let z4 = z * z * z * z;
    z4 * (126.0 + z * (-420.0 + z * (540.0 + z * (-315.0 + 70.0 * z))))
}

/// Antiderivative of [`s9_over_z`] vanishing at 0.
fn s9_over_z_integral(z: f64) -> f64 {
    let z5 = z.powi(5);
    z5 * (126.0 / 5.0 + z * (-70.0 + z * (540.0 / 7.0 + z * (-315.0 / 8.0 + 70.0 / 9.0 * z))))
}

/// Radial coordinate maps for one background.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialMaps {
    params: KerrParams,
    r_switch: f64,
}

/// Radius at which `r*_K` is anchored to `r*`, in units of `M`.
pub const KERR_TORTOISE_ANCHOR: f64 = 10.0;

impl RadialMaps {
    pub fn params(&self) -> &KerrParams {
        &self.params
    }

    pub fn r_switch(&self) -> f64 {
        self.r_switch
    }

    pub fn tortoise(&self, r: f64) -> f64 {
        tortoise(self.params.mass, r)
    }

    /// `dr*/dr = (1 − 2M/r)⁻¹`.
    pub fn tortoise_prime(&self, r: f64) -> f64 {
        r / (r - 2.0 * self.params.mass)
    }

    /// Kerr tortoise coordinate for `r > r_+`, integrated from the anchor
    /// `r*_K(10M) = r*(10M)`.
    pub fn kerr_tortoise(&self, r: f64) -> Result<f64> {
        let p = &self.params;
        let rp = p.r_plus();
        if !(r > rp) {
            return Err(Error::Domain(format!("r*_K requires r > r_+ = {rp}, got {r}")));
        }
        let anchor = KERR_TORTOISE_ANCHOR * p.mass;
        let integrand = |x: f64| (x * x + p.spin * p.spin) / p.delta(x);
        let (lo, hi, sign) = if r < anchor { (r, anchor, -1.0) } else { (anchor, r, 1.0) };
        // Geometric breakpoints toward the horizon resolve the log singularity.
        let mut breaks = vec![lo];
        if lo < anchor {
            let mut d = (anchor - rp) / 2.0;
            while rp + d > lo {
                breaks.push(rp + d);
                d /= 2.0;
            }
            breaks.sort_by(f64::total_cmp);
        }
        breaks.push(hi);
        breaks.dedup();
        let mut f = integrand;
        let integral = quadrature::integrate_with_breaks(&mut f, &breaks, 1e-13, 1e-14)?;
        Ok(self.tortoise(anchor) + sign * integral.value)
    }

    pub fn kerr_tortoise_prime(&self, r: f64) -> f64 {
        let p = &self.params;
        (r * r + p.spin * p.spin) / p.delta(r)
    }

    fn mu_blend_z(&self, r: f64) -> f64 {
        2.0 * (r - 2.0 * self.params.mass) / self.params.mass
    }

    /// `μ'`: 1 for `r <= 2M`, `(1 − 2M/r)⁻¹` for `r >= 5M/2`, and
    /// `1 + s(z)((1 − 2M/r)⁻¹ − 1)` in between, `z = 2(r − 2M)/M`, with the
    /// degree-9 smoothstep `s`. Since `(1 − 2M/r)⁻¹ − 1 = 4/z` the blend is a
    /// polynomial, and `μ'` is C³ across both ends.
    pub fn mu_prime(&self, r: f64) -> f64 {
        let m = self.params.mass;
        if r <= 2.0 * m {
            1.0
        } else if r >= 2.5 * m {
            r / (r - 2.0 * m)
        } else {
            let z = self.mu_blend_z(r);
            1.0 + 4.0 * s9_over_z(z)
        }
    }

    /// Slicing function with `μ = r*` for `r >= 5M/2`.
    pub fn mu(&self, r: f64) -> f64 {
        let m = self.params.mass;
        let at_switch = self.tortoise(2.5 * m);
        if r >= 2.5 * m {
            self.tortoise(r)
        } else if r >= 2.0 * m {
            at_switch + (r - 2.5 * m) + 2.0 * m * (s9_over_z_integral(self.mu_blend_z(r)) - s9_over_z_integral(1.0))
        } else {
            at_switch + (r - 2.5 * m) - 2.0 * m * s9_over_z_integral(1.0)
        }
    }

    /// Hybrid radius: `r` below `R`, `r*` above `2R`, quintic blend between.
    pub fn rtilde(&self, r: f64) -> f64 {
        let rs = self.r_switch;
        if r <= rs {
            r
        } else if r >= 2.0 * rs {
            self.tortoise(r)
        } else {
            let s = smoothstep5((r - rs) / rs);
            (1.0 - s) * r + s * self.tortoise(r)
        }
    }

    pub fn rtilde_prime(&self, r: f64) -> f64 {
        let rs = self.r_switch;
        if r <= rs {
            1.0
        } else if r >= 2.0 * rs {
            self.tortoise_prime(r)
        } else {
            let z = (r - rs) / rs;
            let s = smoothstep5(z);
            (1.0 - s) + s * self.tortoise_prime(r)
                + smoothstep5_prime(z) / rs * (self.tortoise(r) - r)
        }
    }

    /// Radius `r >= r_e` with `r̃(r) = value`.
    pub fn invert_rtilde(&self, value: f64) -> Result<f64> {
        let rs = self.r_switch;
        let m = self.params.mass;
        if !value.is_finite() || value < self.params.r_e {
            return Err(Error::Domain(format!(
                "r~ = {value} outside the range [{}, inf) of the hybrid radius",
                self.params.r_e
            )));
        }
        if value <= rs {
            return Ok(value);
        }
        if value >= self.rtilde(2.0 * rs) {
            return Ok(2.0 * m + invert_tortoise_offset(m, value));
        }
        let tol = 1e-13 * value.abs().max(1.0);
        let (mut lo, mut hi) = (rs, 2.0 * rs);
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.rtilde(x) - value;
            if f.abs() <= tol {
                return Ok(x);
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let newton = x - f / self.rtilde_prime(x);
            x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
        }
        Ok(x)
    }
}

/// Number of radii sampled when verifying the map invariants.
pub const MAP_SAMPLES: usize = 10_000;

/// Builds the radial maps and verifies every invariant on a dense sample.
pub fn build_radial_maps(params: &KerrParams, r_switch: f64) -> Result<RadialMaps> {
    horizon_radii(params)?;
    let m = params.mass;
    if !(r_switch >= 4.0 * m) || !r_switch.is_finite() {
        return Err(Error::Parameter(format!(
            "R_switch = {r_switch} must be at least 4M = {}",
            4.0 * m
        )));
    }
    let maps = RadialMaps { params: *params, r_switch };
    let r_plus = params.r_plus();
    let r_hi = 4.0 * r_switch;
    for i in 0..MAP_SAMPLES {
        let r = params.r_e + (r_hi - params.r_e) * (i as f64 + 0.5) / MAP_SAMPLES as f64;
        if !(maps.rtilde_prime(r) > 0.0) {
            return Err(Error::RadialMap(format!("dr~/dr > 0 fails at r = {r}")));
        }
        let mp = maps.mu_prime(r);
        if !(mp > 0.0) {
            return Err(Error::RadialMap(format!("mu'(r) > 0 fails at r = {r}")));
        }
        for theta in [0.0, std::f64::consts::FRAC_PI_2] {
            let c = 1.0 - 2.0 * m * r / params.rho2(r, theta);
            if !(2.0 - c * mp > 0.0) {
                return Err(Error::RadialMap(format!(
                    "space-like slices (2 - (1 - 2Mr/rho^2) mu' > 0) fail at r = {r}, theta = {theta}"
                )));
            }
        }
        if r > 2.0 * m && r <= 2.5 * m && !(maps.mu(r) >= maps.tortoise(r) - 1e-12 * (1.0 + maps.tortoise(r).abs())) {
            return Err(Error::RadialMap(format!("mu >= r* fails at r = {r}")));
        }
        if r > r_plus && !(maps.kerr_tortoise_prime(r) > 0.0) {
            return Err(Error::RadialMap(format!("dr*_K/dr > 0 fails at r = {r}")));
        }
    }
    let at = 2.5 * m;
    let mu_gap = (maps.mu(at) - maps.tortoise(at)).abs();
    if mu_gap > 1e-10 {
        return Err(Error::RadialMap(format!("mu(5M/2) != r*(5M/2), gap {mu_gap:e}")));
    }
    Ok(maps)
}

/// Max `|g^{αβ}_K − g^{αβ}_S|` (BL components) at one point.
pub fn kerr_schwarzschild_gap(params: &KerrParams, r: f64, theta: f64) -> Result<[[f64; 4]; 4]> {
    let k = bl_metric(params, r, theta)?;
    let s = bl_metric(&params.schwarzschild_limit(), r, theta)?;
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (k.g_upper[i][j] - s.g_upper[i][j]).abs();
        }
    }
    Ok(out)
}
