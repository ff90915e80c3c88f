//! Decay-rate extraction: log–log power-law fits, envelope maxima, the
//! theorem's exponents, ε-scaling of tails and self-convergence orders.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of usable samples for a fit.
pub const MIN_FIT_SAMPLES: usize = 20;

/// `κ = min{2, p − 2}`.
pub fn kappa(p: u32) -> Result<u32> {
    if p < 3 {
        return Err(Error::Parameter(format!("kappa needs an integer p >= 3, got {p}")));
    }
    Ok((p - 2).min(2))
}

/// Predicted exponents for one power `p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremTarget {
    pub p: u32,
    pub kappa: u32,
    /// Decay exponent at fixed `r̃`: `1 + κ`.
    pub interior_exponent: f64,
    /// Exponent in `⟨t̃ − r̃⟩` at fixed large `t̃`: `κ`.
    pub cone_exponent: f64,
}

impl TheoremTarget {
    pub fn new(p: u32) -> Result<Self> {
        let k = kappa(p)?;
        Ok(TheoremTarget { p, kappa: k, interior_exponent: 1.0 + k as f64, cone_exponent: k as f64 })
    }

    /// `γ₁ = min{γ, pγ − 1}` used by the improved derivative bounds.
    pub fn gamma1(&self, gamma: f64) -> f64 {
        gamma.min(self.p as f64 * gamma - 1.0)
    }
}

/// Ordinary least-squares fit of `log|y| = slope · log t + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub residual_rms: f64,
    pub samples: usize,
    /// Samples in the window dropped by the floor filter.
    pub excluded: usize,
}

impl DecayFit {
    /// Whether the window spans at least a decade.
    pub fn spans_decade(&self) -> bool {
        self.window.1 >= 10.0 * self.window.0
    }
}

/// Least-squares line through `(x, y)` with the slope's standard error.
fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let dof = (n - 2.0).max(1.0);
    let stderr = (ssr / dof / sxx).sqrt();
    (slope, intercept, stderr, (ssr / n).sqrt())
}

/// Fit `|y| ~ t^slope` over `window`, discarding samples with `|y| <= floor`.
pub fn fit_powerlaw(t: &[f64], y: &[f64], window: (f64, f64), floor: f64) -> Result<DecayFit> {
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    let mut excluded = 0;
    for (&ti, &yi) in t.iter().zip(y) {
        if ti < window.0 || ti > window.1 || !(ti > 0.0) {
            continue;
        }
        if yi.abs() > floor && yi.is_finite() {
            lx.push(ti.ln());
            ly.push(yi.abs().ln());
        } else {
            excluded += 1;
        }
    }
    if lx.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} usable samples in window [{}, {}] (need {MIN_FIT_SAMPLES}; {excluded} below floor)",
            lx.len(),
            window.0,
            window.1
        )));
    }
    let (slope, intercept, stderr, residual_rms) = ols(&lx, &ly);
    Ok(DecayFit { slope, intercept, stderr, window, residual_rms, samples: lx.len(), excluded })
}

/// Maxima of `|y|` between consecutive sign changes. A series without sign
/// changes is returned unchanged (as `|y|`).
pub fn envelope_maxima(t: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let changes = y.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
    if changes == 0 {
        return (t.to_vec(), y.iter().map(|v| v.abs()).collect());
    }
    let mut et = Vec::new();
    let mut ey = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for i in 0..y.len() {
        if i > 0 && y[i] * y[i - 1] < 0.0 {
            if let Some((bt, by)) = best.take() {
                et.push(bt);
                ey.push(by);
            }
        }
        let a = y[i].abs();
        if best.map_or(true, |(_, by)| a > by) {
            best = Some((t[i], a));
        }
    }
    // The last lobe is incomplete; keep it only if the series never crosses again.
    (et, ey)
}

/// Counts sign changes of `y` for `t` inside `window`.
pub fn sign_changes(t: &[f64], y: &[f64], window: (f64, f64)) -> usize {
    let v: Vec<f64> = t
        .iter()
        .zip(y)
        .filter(|(ti, _)| **ti >= window.0 && **ti <= window.1)
        .map(|(_, yi)| *yi)
        .collect();
    v.windows(2).filter(|w| w[0] * w[1] < 0.0).count()
}

/// Tail fit that switches to envelope maxima when the window oscillates.
pub fn fit_tail(t: &[f64], y: &[f64], window: (f64, f64), floor: f64) -> Result<DecayFit> {
    if sign_changes(t, y, window) > 2 {
        let (et, ey) = envelope_maxima(t, y);
        fit_powerlaw(&et, &ey, window, floor)
    } else {
        fit_powerlaw(t, y, window, floor)
    }
}

/// Latest decade `[t_end/10, t_end]` of the series.
pub fn latest_decade(t: &[f64]) -> Option<(f64, f64)> {
    let end = *t.last()?;
    (end > 0.0).then_some((end / 10.0, end))
}

/// Fit over the latest decade (auto-chosen windows must span one).
pub fn fit_auto(t: &[f64], y: &[f64], floor: f64) -> Result<DecayFit> {
    let w = latest_decade(t)
        .ok_or_else(|| Error::InsufficientData("empty series".into()))?;
    fit_tail(t, y, w, floor)
}

/// One station's comparison with the predicted exponent.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationVerdict {
    pub station: String,
    pub quantity: String,
    pub predicted: f64,
    pub fit: Option<DecayFit>,
    pub tolerance: f64,
    pub pass: bool,
    pub note: String,
}

/// Verdict for a slope measured against `−predicted` at `tolerance`.
/// An identically zero series is a vacuous pass.
pub fn judge_slope(
    station: &str,
    quantity: &str,
    t: &[f64],
    y: &[f64],
    window: (f64, f64),
    predicted: f64,
    tolerance: f64,
    floor: f64,
) -> StationVerdict {
    let base = StationVerdict {
        station: station.into(),
        quantity: quantity.into(),
        predicted,
        fit: None,
        tolerance,
        pass: false,
        note: String::new(),
    };
    if y.iter().all(|v| *v == 0.0) {
        return StationVerdict { pass: true, note: "vacuous pass: identically zero".into(), ..base };
    }
    match fit_tail(t, y, window, floor) {
        Ok(fit) => {
            let pass = (fit.slope + predicted).abs() <= tolerance;
            StationVerdict { fit: Some(fit), pass, ..base }
        }
        Err(e) => StationVerdict { note: e.to_string(), ..base },
    }
}

/// `log(A₁/A₂)/log(ε₁/ε₂)` with `A` the geometric-mean amplitude over the
/// common samples of the window.
pub fn epsilon_scaling(
    eps: (f64, f64),
    t: &[f64],
    y1: &[f64],
    y2: &[f64],
    window: (f64, f64),
    floor: f64,
) -> Result<f64> {
    let mut acc = 0.0;
    let mut n = 0usize;
    for i in 0..t.len().min(y1.len()).min(y2.len()) {
        if t[i] < window.0 || t[i] > window.1 {
            continue;
        }
        let (a, b) = (y1[i].abs(), y2[i].abs());
        if a > floor && b > floor {
            acc += (a / b).ln();
            n += 1;
        }
    }
    if n < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "tail below floor: {n} common samples above {floor:e}"
        )));
    }
    Ok((acc / n as f64) / (eps.0 / eps.1).ln())
}

/// Self-convergence order from three resolutions sampled at common times.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConvergenceOrder {
    /// `log₂(‖c − m‖₂ / ‖m − f‖₂)` over all samples.
    pub norm: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub samples: usize,
}

pub fn convergence_order(coarse: &[f64], mid: &[f64], fine: &[f64]) -> Result<ConvergenceOrder> {
    if coarse.len() != mid.len() || mid.len() != fine.len() {
        return Err(Error::InsufficientData("non-nested outputs: lengths differ".into()));
    }
    let scale = coarse.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut orders: Vec<f64> = Vec::new();
    for i in 0..coarse.len() {
        let d1 = (coarse[i] - mid[i]).abs();
        let d2 = (mid[i] - fine[i]).abs();
        if d1 > 1e-13 * scale && d2 > 1e-14 * scale {
            orders.push((d1 / d2).log2());
        }
    }
    if orders.is_empty() {
        return Err(Error::InsufficientData(
            "degenerate inputs: resolutions give identical results".into(),
        ));
    }
    orders.sort_by(f64::total_cmp);
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    Ok(ConvergenceOrder {
        norm: (d(coarse, mid) / d(mid, fine)).log2(),
        median: orders[orders.len() / 2],
        min: orders[0],
        max: *orders.last().unwrap(),
        samples: orders.len(),
    })
}

/// Slopes of `φ` and `∂φ` at one station, with the ratio of their exponents.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivativeGain {
    pub phi: Option<DecayFit>,
    pub derivative: Option<DecayFit>,
    /// `slope(φ) − slope(∂φ)`; one extra power of decay gives 1.
    pub gain: Option<f64>,
    pub vacuous: bool,
}

pub fn derivative_gain(
    t: &[f64],
    phi: &[f64],
    dphi: &[f64],
    window: (f64, f64),
    floor: f64,
) -> DerivativeGain {
    if phi.iter().chain(dphi).all(|v| *v == 0.0) {
        return DerivativeGain { phi: None, derivative: None, gain: None, vacuous: true };
    }
    let a = fit_tail(t, phi, window, floor).ok();
    let b = fit_tail(t, dphi, window, floor).ok();
    let gain = match (&a, &b) {
        (Some(x), Some(y)) => Some(x.slope - y.slope),
        _ => None,
    };
    DerivativeGain { phi: a, derivative: b, gain, vacuous: false }
}

/// Log-spaced sample points in `[a, b]`; the endpoints are exact.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| match i {
            0 => a,
            _ if i + 1 == n => b,
            _ => (a.ln() + (b.ln() - a.ln()) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}
