//! Time-domain solvers. `e1` evolves the spherically symmetric Schwarzschild
//! problem in `(t, r*)`; `e2` the axisymmetric Kerr problem on `t̃` slices.

pub mod e1;
pub mod e2;
pub mod run;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compactly supported data `φ = ε · bump((r − c)/w)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialDataSpec {
    pub epsilon: f64,
    pub center: f64,
    pub width: f64,
    /// Outer radius the support must fit inside.
    pub r1: f64,
    /// `∂_t φ = 0` at the initial slice; otherwise the packet starts outgoing.
    pub time_symmetric: bool,
}

impl Default for InitialDataSpec {
    fn default() -> Self {
        InitialDataSpec { epsilon: 0.1, center: 12.0, width: 4.0, r1: 20.0, time_symmetric: true }
    }
}

/// `exp(−1/(1 − z²))` on `|z| < 1`, zero outside.
pub fn bump(z: f64) -> f64 {
    if z.abs() < 1.0 {
        (-1.0 / (1.0 - z * z)).exp()
    } else {
        0.0
    }
}

/// `d/dz` of [`bump`].
pub fn bump_prime(z: f64) -> f64 {
    if z.abs() < 1.0 {
        let q = 1.0 - z * z;
        -2.0 * z / (q * q) * bump(z)
    } else {
        0.0
    }
}

impl InitialDataSpec {
    /// Support `[max(r_e, c − w), c + w]`, checked against `[r_e, R₁]`.
    pub fn support(&self, r_e: f64) -> Result<(f64, f64)> {
        if !(self.width > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Parameter(format!(
                "data width must be positive and epsilon finite (w = {}, eps = {})",
                self.width, self.epsilon
            )));
        }
        let hi = self.center + self.width;
        if hi > self.r1 {
            return Err(Error::Parameter(format!(
                "data support reaches r = {hi}, beyond R1 = {}",
                self.r1
            )));
        }
        Ok(((self.center - self.width).max(r_e), hi))
    }

    pub fn phi(&self, r: f64) -> f64 {
        self.epsilon * bump((r - self.center) / self.width)
    }

    pub fn dphi_dr(&self, r: f64) -> f64 {
        self.epsilon * bump_prime((r - self.center) / self.width) / self.width
    }
}

/// Field data on one slice. In the 1+1 engine `phi` holds `ψ = rφ` and `pi`
/// holds `∂_t ψ`; in the 2+1 engine they hold `φ` and `∂_t̃ φ`.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSlice {
    pub time: f64,
    pub phi: Vec<f64>,
    pub pi: Vec<f64>,
}

impl FieldSlice {
    pub fn zeros(n: usize) -> Self {
        FieldSlice { time: 0.0, phi: vec![0.0; n], pi: vec![0.0; n] }
    }

    pub fn is_finite(&self) -> bool {
        self.phi.iter().chain(&self.pi).all(|v| v.is_finite())
    }
}

/// Where and when a run stopped because the field left the finite range or
/// crossed the blow-up threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowUp {
    pub time: f64,
    /// `r*` for the 1+1 engine, `r` for the 2+1 engine.
    pub radius: f64,
    pub theta: Option<f64>,
    pub value: f64,
}

/// Amplitude of `φ` treated as blow-up.
pub const BLOWUP_THRESHOLD: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Completed,
    BlowUp(BlowUp),
}

/// Probe location.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Station {
    /// Fixed `r̃` (`r*` in the 1+1 engine).
    Interior { rtilde: f64 },
    /// Fixed `u = t̃ − r̃`.
    Cone { u: f64 },
}

impl Station {
    pub fn label(&self) -> String {
        match self {
            Station::Interior { rtilde } => format!("r{rtilde}"),
            Station::Cone { u } => format!("u{u}"),
        }
    }
}

/// Time series recorded at one station.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct ProbeSeries {
    pub t: Vec<f64>,
    pub phi: Vec<f64>,
    pub dphi_dt: Vec<f64>,
    pub dphi_dr: Vec<f64>,
    /// `r̃` of each sample (varies along cone stations).
    pub rtilde: Vec<f64>,
}

impl ProbeSeries {
    pub fn push(&mut self, s: ProbeSample) {
        self.t.push(s.t);
        self.phi.push(s.phi);
        self.dphi_dt.push(s.dphi_dt);
        self.dphi_dr.push(s.dphi_dr);
        self.rtilde.push(s.rtilde);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeSample {
    pub t: f64,
    pub rtilde: f64,
    pub phi: f64,
    pub dphi_dt: f64,
    pub dphi_dr: f64,
}

/// Six-point Lagrange weights (value, derivative) for nodes at offsets
/// `−2..=3` around `s ∈ [0, 1)`.
pub(crate) fn lagrange6(s: f64) -> ([f64; 6], [f64; 6]) {
    let nodes = [-2.0, -1.0, 0.0, 1.0, 2.0, 3.0];
    let mut w = [0.0; 6];
    let mut dw = [0.0; 6];
    for k in 0..6 {
        let mut denom = 1.0;
        for j in 0..6 {
            if j != k {
                denom *= nodes[k] - nodes[j];
            }
        }
        let mut num = 1.0;
        for j in 0..6 {
            if j != k {
                num *= s - nodes[j];
            }
        }
        w[k] = num / denom;
        let mut d = 0.0;
        for m in 0..6 {
            if m == k {
                continue;
            }
            let mut prod = 1.0;
            for j in 0..6 {
                if j != k && j != m {
                    prod *= s - nodes[j];
                }
            }
            d += prod;
        }
        dw[k] = d / denom;
    }
    (w, dw)
}
