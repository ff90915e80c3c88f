//! Radial fundamental-solution quadrature for `□v = H`, `v[0] = 0`, on
//! Minkowski space with cone-supported `H`:
//!
//! `r v(t, r) = ½ ∫_{D_tr} ρ H(s, ρ) ds dρ`,
//! `D_tr = {0 ≤ s − ρ ≤ t − r, t − r ≤ s + ρ ≤ t + r}`,
//!
//! evaluated in null coordinates `u = s − ρ`, `w = s + ρ` (`ds dρ = ½ du dw`).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::logspace;
use crate::error::{Error, Result};
use crate::evolution::bump;
use crate::quadrature::integrate_with_breaks;

/// `⟨x⟩ = sqrt(2 + x²)`.
pub fn bracket(x: f64) -> f64 {
    (2.0 + x * x).sqrt()
}

/// `H = ⟨ρ⟩^{-β} ⟨s⟩^{-γ_w} ⟨s−ρ⟩^{-η}` inside the cone, 0 outside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedSource {
    pub beta: f64,
    pub gamma_w: f64,
    pub eta: f64,
    pub scale: f64,
}

impl WeightedSource {
    pub fn new(beta: f64, gamma_w: f64, eta: f64) -> Self {
        WeightedSource { beta, gamma_w, eta, scale: 1.0 }
    }

    pub fn eval(&self, s: f64, rho: f64) -> f64 {
        if rho > s || rho < 0.0 {
            return 0.0;
        }
        self.scale * bracket(rho).powf(-self.beta) * bracket(s).powf(-self.gamma_w) * bracket(s - rho).powf(-self.eta)
    }
}

/// `η̃ = η − δ − 2` for `η < 1`, `−1` for `η > 1`.
pub fn eta_tilde(eta: f64, delta_small: f64) -> Result<f64> {
    if eta == 1.0 || !eta.is_finite() {
        return Err(Error::Parameter(format!("eta must be finite and differ from 1, got {eta}")));
    }
    Ok(if eta < 1.0 { eta - delta_small - 2.0 } else { -1.0 })
}

/// `μ(η) = 1 − η` for `η < 1`, `0` for `η > 1`.
pub fn mu_eta(eta: f64) -> f64 {
    if eta < 1.0 {
        1.0 - eta
    } else {
        0.0
    }
}

const ABS_TOL: f64 = 1e-10;
const INNER_REL: f64 = 1e-13;

/// Geometric breakpoints accumulating at `at` inside `[a, b]`.
fn graded(a: f64, b: f64, at: f64) -> Vec<f64> {
    let mut v = vec![a, b];
    let len = b - a;
    if len <= 0.0 {
        return v;
    }
    let mut d = len / 2.0;
    while d > 1e-3 * len.min(1.0) {
        for p in [at - d, at + d] {
            if p > a && p < b {
                v.push(p);
            }
        }
        d /= 2.0;
    }
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// `∫∫ ρ H ds dρ` over the part of `D_tr` with `ρ ∈ [ρ_lo, ρ_hi]`.
pub fn rect_integral(t: f64, r: f64, rho_lo: f64, rho_hi: f64, h: &(dyn Fn(f64, f64) -> f64 + Sync)) -> Result<f64> {
    if !(t >= r && r >= 0.0) {
        return Err(Error::Domain(format!("rectangle needs t >= r >= 0, got t = {t}, r = {r}")));
    }
    let (w0, w1) = (t - r, t + r);
    if w1 <= w0 || rho_hi <= rho_lo {
        return Ok(0.0);
    }
    let mut err: Option<Error> = None;
    let mut outer = |u: f64| -> f64 {
        // ρ = (w − u)/2 ∈ [ρ_lo, ρ_hi]  ⇔  w ∈ [u + 2ρ_lo, u + 2ρ_hi].
        let a = w0.max(u + 2.0 * rho_lo);
        let b = w1.min(u + 2.0 * rho_hi);
        if b <= a {
            return 0.0;
        }
        let mut inner = |w: f64| {
            let rho = 0.5 * (w - u);
            rho * h(0.5 * (w + u), rho)
        };
        let breaks = graded(a, b, a);
        match integrate_with_breaks(&mut inner, &breaks, ABS_TOL * 1e-3, INNER_REL) {
            Ok(v) => 0.5 * v.value,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        }
    };
    let breaks = graded(0.0, t - r, 0.0);
    let total = integrate_with_breaks(&mut outer, &breaks, ABS_TOL, 1e-12);
    if let Some(e) = err {
        return Err(e);
    }
    let total = total?;
    if total.error > ABS_TOL * (1.0 + total.value.abs()) * 10.0 {
        return Err(Error::Quadrature(format!("rectangle integral error {} too large", total.error)));
    }
    Ok(total.value)
}

/// `v(t, r)`; at `r = 0` the limit `¼ ∫_0^t (t − u) H((t+u)/2, (t−u)/2) du`.
pub fn rect_solution(t: f64, r: f64, h: &(dyn Fn(f64, f64) -> f64 + Sync)) -> Result<f64> {
    if !(t >= r && r >= 0.0) {
        return Err(Error::Domain(format!("rectangle needs t >= r >= 0, got t = {t}, r = {r}")));
    }
    if r == 0.0 {
        let mut f = |u: f64| (t - u) * h(0.5 * (t + u), 0.5 * (t - u));
        let v = integrate_with_breaks(&mut f, &graded(0.0, t, 0.0), ABS_TOL, 1e-13)?;
        return Ok(0.25 * v.value);
    }
    Ok(0.5 * rect_integral(t, r, 0.0, f64::INFINITY, h)? / r)
}

/// One dyadic scale `R < ρ < 2R` of the rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScaleRow {
    pub big_r: f64,
    /// Case (i) is `R < (t − r)/8`.
    pub near_case: bool,
    pub integral: f64,
    pub predicted: f64,
    pub ratio: f64,
}

/// Per-scale integrals of `ρH` with the predicted scale bounds
/// `R^{3−β}⟨t−r⟩^{−1−η}` (case i) and `R^{1−β}⟨t−r⟩^{μ(η)}` (case ii).
/// The lowest row collects `ρ < 1` under the label `R = ½`.
pub fn dyadic_breakdown(t: f64, r: f64, src: &WeightedSource) -> Result<Vec<ScaleRow>> {
    let h = |s: f64, rho: f64| src.eval(s, rho);
    let tr = t - r;
    let mut rows = Vec::new();
    let mut k: i32 = -1;
    loop {
        let big_r = (2.0f64).powi(k);
        let (lo, hi) = if k < 0 { (0.0, 1.0) } else { (big_r, 2.0 * big_r) };
        if lo > 0.5 * (t + r) {
            break;
        }
        let integral = rect_integral(t, r, lo, hi, &h)?;
        let near_case = big_r < tr / 8.0;
        let predicted = if near_case {
            big_r.powf(3.0 - src.beta) * bracket(tr).powf(-1.0 - src.eta)
        } else {
            big_r.powf(1.0 - src.beta) * bracket(tr).powf(mu_eta(src.eta))
        };
        rows.push(ScaleRow { big_r, near_case, integral, predicted, ratio: integral / predicted });
        k += 1;
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct XiSample {
    pub t: f64,
    pub r: f64,
    pub v: f64,
    pub xi: f64,
}

/// Samples of a normalized quantity `Ξ` over `(t, r)` and its sup per
/// sub-decade bin of `t`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub samples: Vec<XiSample>,
    /// `(t_lo, t_hi, sup Ξ)` per bin.
    pub bins: Vec<(f64, f64, f64)>,
    pub sup: f64,
}

impl BoundReport {
    /// Whether the binned sup never increases (beyond `rel_slack`) among bins
    /// starting at or after `t_from`.
    pub fn non_increasing_from(&self, t_from: f64, rel_slack: f64) -> bool {
        let tail: Vec<f64> = self.bins.iter().filter(|b| b.0 >= t_from * (1.0 - 1e-12)).map(|b| b.2).collect();
        tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + rel_slack))
    }
}

/// Grid used by the bound checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub n_t: usize,
    pub r_over_t: Vec<f64>,
    pub bins_per_decade: usize,
}

impl Default for XiGrid {
    fn default() -> Self {
        XiGrid {
            t_min: 10.0,
            t_max: 1000.0,
            n_t: 25,
            r_over_t: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99],
            bins_per_decade: 4,
        }
    }
}

fn report(grid: &XiGrid, samples: Vec<XiSample>) -> BoundReport {
    let nb = ((grid.t_max / grid.t_min).log10() * grid.bins_per_decade as f64).round().max(1.0) as usize;
    let edges = logspace(grid.t_min, grid.t_max, nb + 1);
    let bins = edges
        .windows(2)
        .map(|e| {
            let sup = samples
                .iter()
                .filter(|s| s.t >= e[0] * (1.0 - 1e-12) && s.t <= e[1] * (1.0 + 1e-12))
                .fold(0.0f64, |m, s| m.max(s.xi));
            (e[0], e[1], sup)
        })
        .collect();
    let sup = samples.iter().fold(0.0f64, |m, s| m.max(s.xi));
    BoundReport { samples, bins, sup }
}

fn sweep(grid: &XiGrid, h: &(dyn Fn(f64, f64) -> f64 + Sync), weight: impl Fn(f64, f64) -> f64 + Sync) -> Result<BoundReport> {
    let pts: Vec<(f64, f64)> = logspace(grid.t_min, grid.t_max, grid.n_t)
        .into_iter()
        .flat_map(|t| grid.r_over_t.iter().map(move |q| (t, q * t)))
        .collect();
    let samples: Result<Vec<XiSample>> = pts
        .par_iter()
        .map(|&(t, r)| {
            let v = rect_solution(t, r, h)?;
            Ok(XiSample { t, r, v, xi: v.abs() * weight(t, r) })
        })
        .collect();
    Ok(report(grid, samples?))
}

/// `Ξ = |v| ⟨r⟩ ⟨t−r⟩^{β+η̃}` for the weighted source with `γ_w = 1`.
pub fn verify_lindcy1(beta: f64, eta: f64, delta_small: f64, scale: f64, grid: &XiGrid) -> Result<BoundReport> {
    if !(beta > 1.0 && beta <= 3.0) {
        return Err(Error::Parameter(format!("beta must lie in (1, 3], got {beta}")));
    }
    if !(delta_small > 0.0) {
        return Err(Error::Parameter(format!("delta_small must be positive, got {delta_small}")));
    }
    let et = eta_tilde(eta, delta_small)?;
    let src = WeightedSource { scale, ..WeightedSource::new(beta, 1.0, eta) };
    let h = move |s: f64, rho: f64| src.eval(s, rho);
    sweep(grid, &h, move |t, r| bracket(r) * bracket(t - r).powf(beta + et))
}

/// Source `⟨t−r⟩^{1/2}/⟨t⟩ · g(r)` with the profile `g = amp · bump(r − 2)`.
pub fn lemma62_source(amp: f64) -> impl Fn(f64, f64) -> f64 + Sync + Copy {
    move |s: f64, rho: f64| {
        if rho > s || rho < 0.0 {
            0.0
        } else {
            bracket(s - rho).sqrt() / bracket(s) * amp * bump(rho - 2.0)
        }
    }
}

/// `Ξ₂ = |v| ⟨r⟩ (t−r)^{γ−3/2}` for the source of [`lemma62_source`].
pub fn verify_lemma62(gamma: f64, amp: f64, grid: &XiGrid) -> Result<BoundReport> {
    if !(gamma < 2.0) {
        return Err(Error::Parameter(format!("gamma must be < 2, got {gamma}")));
    }
    let h = lemma62_source(amp);
    sweep(grid, &h, move |t, r| bracket(r) * (t - r).powf(gamma - 1.5))
}
