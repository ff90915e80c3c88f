//! TOML run configuration. Every section is optional; missing keys take the
//! acceptance defaults. Unknown keys and every constraint violation are
//! collected and reported together.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::run::{EngineSpec, RunSpec};
use crate::evolution::InitialDataSpec;
use crate::operators::Nonlinearity;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Background {
    pub mass: f64,
    pub spin: f64,
    pub r_e: f64,
    pub r_switch: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EngineKind {
    E1,
    E2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grid {
    pub engine: EngineKind,
    pub rstar_min: f64,
    pub rstar_max: f64,
    pub h: f64,
    pub ell: u32,
    pub r_out: f64,
    pub n_theta: usize,
    pub cfl: f64,
    pub ko_sigma: f64,
    pub t_final: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Data {
    pub epsilon: f64,
    pub center: f64,
    pub width: f64,
    pub r1: f64,
    pub time_symmetric: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NonlinearitySection {
    pub enabled: bool,
    pub p: u32,
    /// `+1` defocusing, `−1` focusing.
    pub sign: i8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub every: f64,
    pub norms: bool,
    pub snapshot_times: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Probes {
    /// Interior stations: `r*` for E1, `r` for E2.
    pub r: Vec<f64>,
    pub theta: f64,
    pub u: Vec<f64>,
    pub cut_times: Vec<f64>,
    pub cut_u: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Analysis {
    pub interior_window: [f64; 2],
    pub cone_window: [f64; 2],
    pub floor: f64,
    pub expected_slope: Option<f64>,
    pub tolerance: Option<f64>,
    /// Expected slope of the radiation field along cuts, against `u`.
    pub cone_slope: Option<f64>,
    pub cone_tolerance: Option<f64>,
    pub norm_windows: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub background: Background,
    pub grid: Grid,
    pub data: Data,
    pub nonlinearity: NonlinearitySection,
    pub output: Output,
    pub probes: Probes,
    pub analysis: Analysis,
}

impl Default for Background {
    fn default() -> Self {
        Background { mass: 1.0, spin: 0.0, r_e: 1.0, r_switch: 8.0 }
    }
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            engine: EngineKind::E1,
            rstar_min: -1400.0,
            rstar_max: 2600.0,
            h: 0.1,
            ell: 0,
            r_out: 140.0,
            n_theta: 16,
            cfl: 0.5,
            ko_sigma: 0.02,
            t_final: 2000.0,
        }
    }
}

impl Default for Data {
    fn default() -> Self {
        let d = InitialDataSpec::default();
        Data { epsilon: d.epsilon, center: d.center, width: d.width, r1: d.r1, time_symmetric: d.time_symmetric }
    }
}

impl Default for NonlinearitySection {
    fn default() -> Self {
        NonlinearitySection { enabled: false, p: 3, sign: 1 }
    }
}

impl Default for Output {
    fn default() -> Self {
        Output { every: 1.0, norms: false, snapshot_times: vec![] }
    }
}

impl Default for Probes {
    fn default() -> Self {
        Probes { r: vec![10.0], theta: std::f64::consts::FRAC_PI_2, u: vec![], cut_times: vec![], cut_u: vec![] }
    }
}

impl Default for Analysis {
    fn default() -> Self {
        Analysis {
            interior_window: [300.0, 1800.0],
            cone_window: [20.0, 700.0],
            floor: 1e-14,
            expected_slope: None,
            tolerance: None,
            cone_slope: None,
            cone_tolerance: None,
            norm_windows: vec![],
        }
    }
}

/// Dotted paths of keys not in the schema.
fn unknown_keys(value: &toml::Table, schema: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in value {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match schema.get(k) {
            None => out.push(format!("unknown key `{path}`")),
            Some(toml::Value::Table(sub)) => {
                if let toml::Value::Table(t) = v {
                    unknown_keys(t, sub, &path, out);
                }
            }
            Some(_) => {}
        }
    }
}

fn schema_table() -> toml::Table {
    // The defaults serialize every key except the optional ones.
    let mut t = toml::Table::try_from(RunConfig::default()).expect("defaults serialize");
    if let Some(toml::Value::Table(a)) = t.get_mut("analysis") {
        for k in ["expected_slope", "tolerance", "cone_slope", "cone_tolerance"] {
            a.insert(k.into(), toml::Value::Float(0.0));
        }
    }
    t
}

impl RunConfig {
    /// Parses and validates; the error lists every violation found.
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(vec![e.to_string()]))?;
        let mut errs = Vec::new();
        unknown_keys(&table, &schema_table(), "", &mut errs);
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.nonlinearity.enabled {
            if let Err(e) = Nonlinearity::new(self.nonlinearity.p, self.nonlinearity.sign) {
                errs.push(format!("nonlinearity: {e}"));
            }
        }
        for (name, [a, b]) in [("interior_window", self.analysis.interior_window), ("cone_window", self.analysis.cone_window)] {
            if !(a > 0.0 && b > a) {
                errs.push(format!("analysis.{name} [{a}, {b}] must satisfy 0 < t0 < t1"));
            }
        }
        for (name, v) in [("tolerance", self.analysis.tolerance), ("cone_tolerance", self.analysis.cone_tolerance)] {
            if v.is_some_and(|t| !(t > 0.0)) {
                errs.push(format!("analysis.{name} must be positive"));
            }
        }
        for w in &self.analysis.norm_windows {
            if !(w[0] >= 0.0 && w[1] > w[0] && w[1] <= self.grid.t_final) {
                errs.push(format!("analysis.norm_windows entry {w:?} must lie in [0, grid.t_final]"));
            }
        }
        if matches!(self.grid.engine, EngineKind::E2) && !self.analysis.norm_windows.is_empty() && !self.output.norms {
            errs.push("analysis.norm_windows needs output.norms = true".into());
        }
        errs.extend(self.run_spec().validate());
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn run_spec(&self) -> RunSpec {
        let g = &self.grid;
        let engine = match g.engine {
            EngineKind::E1 => EngineSpec::E1 { rstar_min: g.rstar_min, rstar_max: g.rstar_max, h: g.h, ell: g.ell },
            EngineKind::E2 => EngineSpec::E2 { r_out: g.r_out, h_r: g.h, n_theta: g.n_theta },
        };
        let d = &self.data;
        let nl = &self.nonlinearity;
        RunSpec {
            mass: self.background.mass,
            spin: self.background.spin,
            r_e: self.background.r_e,
            r_switch: self.background.r_switch,
            engine,
            data: InitialDataSpec {
                epsilon: d.epsilon,
                center: d.center,
                width: d.width,
                r1: d.r1,
                time_symmetric: d.time_symmetric,
            },
            nl: if nl.enabled { Nonlinearity::new(nl.p, nl.sign).ok() } else { None },
            ko_sigma: g.ko_sigma,
            cfl: g.cfl,
            t_final: g.t_final,
            output_every: self.output.every,
            probe_r: self.probes.r.clone(),
            probe_theta: self.probes.theta,
            probe_u: self.probes.u.clone(),
            cut_times: self.probes.cut_times.clone(),
            cut_u: self.probes.cut_u.clone(),
            norms: self.output.norms || !self.analysis.norm_windows.is_empty(),
            snapshot_times: self.output.snapshot_times.clone(),
        }
    }
}
