//! Run driver: builds an engine from a [`RunSpec`], advances it to the final
//! time and records probes, cone profiles, energies and annulus masses at a
//! fixed output cadence.

use serde::{Deserialize, Serialize};

use super::e1::{E1Solver, Grid1D};
use super::e2::{E2Solver, Grid2D};
use super::{FieldSlice, InitialDataSpec, Outcome, ProbeSample, ProbeSeries, Station};
use crate::analysis::{convergence_order, ConvergenceOrder};
use crate::error::{Error, Result};
use crate::geometry::{build_radial_maps, tortoise, KerrParams, RadialMaps};
use crate::norms::{annulus_masses, e1_norm_slice, e2_norm_slice, energy, AnnulusSeries, NormSlice};
use crate::operators::Nonlinearity;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EngineSpec {
    /// Uniform `r*` grid; interior probes are given in `r*`.
    E1 { rstar_min: f64, rstar_max: f64, h: f64, ell: u32 },
    /// `r ∈ [r_e, r_out]`; interior probes are given in `r`.
    E2 { r_out: f64, h_r: f64, n_theta: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub mass: f64,
    pub spin: f64,
    pub r_e: f64,
    /// Switch radius `R` of the `r̃` blend.
    pub r_switch: f64,
    pub engine: EngineSpec,
    pub data: InitialDataSpec,
    pub nl: Option<Nonlinearity>,
    pub ko_sigma: f64,
    pub cfl: f64,
    pub t_final: f64,
    pub output_every: f64,
    pub probe_r: Vec<f64>,
    /// Polar angle of E2 probes.
    pub probe_theta: f64,
    pub probe_u: Vec<f64>,
    /// Times at which a profile along `u` is cut.
    pub cut_times: Vec<f64>,
    pub cut_u: Vec<f64>,
    /// Record energies and annulus masses at every output time.
    pub norms: bool,
    pub snapshot_times: Vec<f64>,
}

impl RunSpec {
    /// Linear 1+1 Schwarzschild run with the acceptance defaults.
    pub fn e1_default() -> Self {
        RunSpec {
            mass: 1.0,
            spin: 0.0,
            r_e: 1.0,
            r_switch: 8.0,
            engine: EngineSpec::E1 { rstar_min: -1400.0, rstar_max: 2600.0, h: 0.1, ell: 0 },
            data: InitialDataSpec::default(),
            nl: None,
            ko_sigma: 0.02,
            cfl: 0.5,
            t_final: 2000.0,
            output_every: 1.0,
            probe_r: vec![10.0],
            probe_theta: std::f64::consts::FRAC_PI_2,
            probe_u: vec![],
            cut_times: vec![],
            cut_u: vec![],
            norms: false,
            snapshot_times: vec![],
        }
    }

    /// Linear 2+1 Kerr run, `a = 0.3M`, excision at `r_e = M`.
    pub fn e2_default() -> Self {
        RunSpec {
            spin: 0.3,
            engine: EngineSpec::E2 { r_out: 140.0, h_r: 0.1, n_theta: 16 },
            cfl: 0.25,
            t_final: 200.0,
            ..RunSpec::e1_default()
        }
    }

    pub fn params(&self) -> Result<KerrParams> {
        KerrParams::with_excision(self.mass, self.spin, self.r_e)
    }

    /// Earliest time at which boundary influence can reach an interior probe
    /// or a cone cut, from finite propagation speed (unit speed in `r*`; in
    /// `r` for E2, where outgoing rays move no faster than that).
    pub fn causal_horizon(&self) -> Result<f64> {
        let (lo, hi) = self.data.support(self.r_e)?;
        let cut_reach = |edge: f64, start: f64| {
            // Cones at u = t − x meet a reflected front x = edge − (t − (edge − start)).
            self.cut_u.iter().chain(&self.probe_u).fold(f64::INFINITY, |m, &u| m.min((2.0 * edge - start + u) / 2.0))
        };
        match self.engine {
            EngineSpec::E1 { rstar_min, rstar_max, .. } => {
                let (slo, shi) = (tortoise(self.mass, lo.max(2.0 * self.mass + 1e-9)), tortoise(self.mass, hi));
                let mut t = f64::INFINITY;
                for &p in &self.probe_r {
                    t = t.min((slo - rstar_min) + (p - rstar_min));
                    t = t.min((rstar_max - shi) + (rstar_max - p));
                }
                Ok(t.min(cut_reach(rstar_max, shi)))
            }
            EngineSpec::E2 { r_out, .. } => {
                let mut t = f64::INFINITY;
                for &p in &self.probe_r {
                    t = t.min((r_out - hi) + (r_out - p));
                }
                Ok(t.min(cut_reach(r_out, hi)))
            }
        }
    }

    /// Every violated constraint, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if let Err(e) = self.params() {
            errs.push(e.to_string());
        }
        if !(self.t_final > 0.0) || !(self.output_every > 0.0) {
            errs.push("T_final and output cadence must be positive".into());
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            errs.push(format!("cfl must lie in (0, 1], got {}", self.cfl));
        }
        if !(self.ko_sigma >= 0.0) {
            errs.push(format!("ko_sigma must be >= 0, got {}", self.ko_sigma));
        }
        let on_cadence = |t: f64| {
            let q = t / self.output_every;
            (q - q.round()).abs() < 1e-9 && t >= 0.0 && t <= self.t_final + 1e-9
        };
        for &t in self.cut_times.iter().chain(&self.snapshot_times) {
            if !on_cadence(t) {
                errs.push(format!("cut/snapshot time {t} is not an output time in [0, T_final]"));
            }
        }
        match self.engine {
            EngineSpec::E1 { rstar_min, rstar_max, h, .. } => {
                if !(h > 0.0) || !(rstar_max > rstar_min) {
                    errs.push("grid: need h > 0 and rstar_max > rstar_min".into());
                }
                for &p in &self.probe_r {
                    if !(p > rstar_min && p < rstar_max) {
                        errs.push(format!("probe r* = {p} outside grid [{rstar_min}, {rstar_max}]"));
                    }
                }
                if let Ok((_, hi)) = self.data.support(self.r_e) {
                    if tortoise(self.mass, hi) >= rstar_max {
                        errs.push(format!("data.R1/support (r = {hi}) beyond grid.rstar_max = {rstar_max}"));
                    }
                }
            }
            EngineSpec::E2 { r_out, h_r, n_theta } => {
                if n_theta % 2 != 0 || n_theta < 4 {
                    errs.push(format!("n_theta must be even and >= 4, got {n_theta}"));
                }
                if !(h_r > 0.0) || !(r_out > self.r_e) {
                    errs.push("grid: need h_r > 0 and r_out > r_e".into());
                }
                for &p in &self.probe_r {
                    if !(p > self.r_e && p < r_out) {
                        errs.push(format!("probe r = {p} outside grid [{}, {r_out}]", self.r_e));
                    }
                }
                if self.data.r1 >= r_out {
                    errs.push(format!("data.R1 = {} beyond grid.r_out = {r_out}", self.data.r1));
                }
            }
        }
        if let Err(e) = self.data.support(self.r_e) {
            errs.push(e.to_string());
        }
        if errs.is_empty() {
            match self.causal_horizon() {
                Ok(t) if t < self.t_final => errs.push(format!(
                    "causal padding: boundary influence reaches the probes at t = {t:.1} < T_final = {}",
                    self.t_final
                )),
                Err(e) => errs.push(e.to_string()),
                _ => {}
            }
        }
        errs
    }
}

/// Profile along `u` at a fixed time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeCut {
    pub time: f64,
    pub u: Vec<f64>,
    pub phi: Vec<f64>,
    /// Radiation field `r·φ`.
    pub radiation: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunOutput {
    pub outcome: Outcome,
    pub dt: f64,
    pub steps: u64,
    pub probes: Vec<(Station, ProbeSeries)>,
    pub cuts: Vec<ConeCut>,
    /// `(t, E)` with the nondegenerate energy; E1 adds the conserved one.
    pub energy: Vec<(f64, f64)>,
    pub killing_energy: Vec<(f64, f64)>,
    pub annuli: AnnulusSeries,
    #[serde(skip)]
    pub snapshots: Vec<FieldSlice>,
    #[serde(skip)]
    pub last: FieldSlice,
}

enum Engine {
    E1(Box<E1Solver>),
    E2(Box<E2Solver>),
}

impl Engine {
    fn step(&mut self, s: &mut FieldSlice, dt: f64) -> std::result::Result<(), super::BlowUp> {
        match self {
            Engine::E1(e) => e.step(s, dt),
            Engine::E2(e) => e.step(s, dt),
        }
    }
}

/// Builds the engine and initial slice without evolving.
fn build(spec: &RunSpec, maps: &RadialMaps) -> Result<(Engine, FieldSlice, f64)> {
    let params = spec.params()?;
    match spec.engine {
        EngineSpec::E1 { rstar_min, rstar_max, h, ell } => {
            let g = Grid1D::with_spacing(rstar_min, rstar_max, h)?;
            let e = E1Solver::new(spec.mass, g, ell, spec.nl, spec.ko_sigma)?;
            let s = e.init_data(&spec.data)?;
            let dt = e.dt(spec.cfl);
            Ok((Engine::E1(Box::new(e)), s, dt))
        }
        EngineSpec::E2 { r_out, h_r, n_theta } => {
            let g = Grid2D::with_spacing(spec.r_e, r_out, h_r, n_theta)?;
            let e = E2Solver::new(params, maps, g, spec.nl, spec.ko_sigma)?;
            let s = e.init_data(&spec.data)?;
            let dt = e.dt(spec.cfl);
            Ok((Engine::E2(Box::new(e)), s, dt))
        }
    }
}

/// Initial slice of a spec, as the engine would start it.
pub fn initial_slice(spec: &RunSpec) -> Result<FieldSlice> {
    let maps = build_radial_maps(&spec.params()?, spec.r_switch)?;
    Ok(build(spec, &maps)?.1)
}

/// Evolves `spec` from its initial data.
pub fn evolve(spec: &RunSpec) -> Result<RunOutput> {
    evolve_with(spec, None, |_| {})
}

/// Evolves from `start` (a restored snapshot) when given; `progress` sees
/// each output time.
pub fn evolve_with(spec: &RunSpec, start: Option<FieldSlice>, mut progress: impl FnMut(f64)) -> Result<RunOutput> {
    let errs = spec.validate();
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let params = spec.params()?;
    let maps = build_radial_maps(&params, spec.r_switch)?;
    let (mut engine, init, dt_max) = build(spec, &maps)?;
    let mut slice = match start {
        Some(s) if s.phi.len() == init.phi.len() => s,
        Some(s) => {
            return Err(Error::Snapshot(format!(
                "snapshot has {} nodes, the configured grid {}",
                s.phi.len(),
                init.phi.len()
            )))
        }
        None => init,
    };
    let sub = (spec.output_every / dt_max).ceil().max(1.0) as u64;
    let dt = spec.output_every / sub as f64;
    let n_out = (spec.t_final / spec.output_every).round() as u64;
    let first_out = (slice.time / spec.output_every).round() as u64;

    let mut out = RunOutput {
        outcome: Outcome::Completed,
        dt,
        steps: 0,
        probes: spec
            .probe_r
            .iter()
            .map(|&r| (Station::Interior { rtilde: r }, ProbeSeries::default()))
            .chain(spec.probe_u.iter().map(|&u| (Station::Cone { u }, ProbeSeries::default())))
            .collect(),
        cuts: vec![],
        energy: vec![],
        killing_energy: vec![],
        annuli: AnnulusSeries::default(),
        snapshots: vec![],
        last: FieldSlice::zeros(0),
    };
    let record = |s: &FieldSlice, engine: &Engine, out: &mut RunOutput| {
        observe(spec, &maps, engine, s, out);
    };
    record(&slice, &engine, &mut out);
    progress(slice.time);
    'outer: for j in first_out + 1..=n_out {
        for _ in 0..sub {
            match engine.step(&mut slice, dt) {
                Ok(()) => out.steps += 1,
                Err(b) => {
                    out.outcome = Outcome::BlowUp(b);
                    break 'outer;
                }
            }
        }
        // Pin the clock to the cadence so output times are exact.
        slice.time = j as f64 * spec.output_every;
        record(&slice, &engine, &mut out);
        progress(slice.time);
    }
    out.last = slice;
    Ok(out)
}

fn norm_slice(engine: &Engine, s: &FieldSlice, maps: &RadialMaps) -> NormSlice {
    match engine {
        Engine::E1(e) => e1_norm_slice(e, s, maps),
        Engine::E2(e) => e2_norm_slice(e, s, maps),
    }
}

/// Probe sample at an interior location (`r*` for E1, `r` for E2).
fn sample_at(spec: &RunSpec, engine: &Engine, s: &FieldSlice, x: f64) -> Option<ProbeSample> {
    match engine {
        Engine::E1(e) => e.sample(s, x),
        Engine::E2(e) => e.sample(s, x, spec.probe_theta),
    }
}

/// Sample on the cone `u = t − r̃` (for E1 `r̃ = r*`), with the areal radius.
fn sample_cone(spec: &RunSpec, maps: &RadialMaps, engine: &Engine, s: &FieldSlice, u: f64) -> Option<(ProbeSample, f64)> {
    let rt = s.time - u;
    match engine {
        Engine::E1(e) => {
            let p = e.sample(s, rt)?;
            let r = spec.mass * 2.0 + crate::geometry::invert_tortoise_offset(spec.mass, rt);
            Some((p, r))
        }
        Engine::E2(e) => {
            let r = maps.invert_rtilde(rt).ok()?;
            let mut p = e.sample(s, r, spec.probe_theta)?;
            p.rtilde = rt;
            Some((p, r))
        }
    }
}

fn observe(spec: &RunSpec, maps: &RadialMaps, engine: &Engine, s: &FieldSlice, out: &mut RunOutput) {
    let t = s.time;
    for (st, series) in out.probes.iter_mut() {
        let got = match *st {
            Station::Interior { rtilde } => sample_at(spec, engine, s, rtilde),
            Station::Cone { u } => sample_cone(spec, maps, engine, s, u).map(|x| x.0),
        };
        if let Some(p) = got {
            series.push(p);
        }
    }
    if spec.cut_times.iter().any(|&c| (c - t).abs() < 1e-9) {
        let mut cut = ConeCut { time: t, u: vec![], phi: vec![], radiation: vec![] };
        for &u in &spec.cut_u {
            if let Some((p, r)) = sample_cone(spec, maps, engine, s, u) {
                cut.u.push(u);
                cut.phi.push(p.phi);
                cut.radiation.push(r * p.phi);
            }
        }
        out.cuts.push(cut);
    }
    if spec.snapshot_times.iter().any(|&c| (c - t).abs() < 1e-9) {
        out.snapshots.push(s.clone());
    }
    if spec.norms {
        let ns = norm_slice(engine, s, maps);
        out.energy.push((t, energy(&ns)));
        out.annuli.push(t, annulus_masses(&ns));
        if let Engine::E1(e) = engine {
            out.killing_energy.push((t, e.energy(s)));
        }
    }
}

/// `spec` with every grid spacing divided by `factor`.
pub fn refined(spec: &RunSpec, factor: u32) -> RunSpec {
    let f = factor as f64;
    let engine = match spec.engine {
        EngineSpec::E1 { rstar_min, rstar_max, h, ell } => EngineSpec::E1 { rstar_min, rstar_max, h: h / f, ell },
        EngineSpec::E2 { r_out, h_r, n_theta } => EngineSpec::E2 { r_out, h_r: h_r / f, n_theta: n_theta * factor as usize },
    };
    RunSpec { engine, ..spec.clone() }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelfConvergence {
    pub spacings: [f64; 3],
    pub order: ConvergenceOrder,
}

/// Runs `spec` at spacings `h`, `h/2`, `h/4` and measures the order from the
/// first interior probe at the common output times.
pub fn self_convergence(spec: &RunSpec) -> Result<SelfConvergence> {
    let mut series = Vec::new();
    let mut spacings = [0.0; 3];
    for (i, f) in [1u32, 2, 4].into_iter().enumerate() {
        let s = refined(spec, f);
        spacings[i] = match s.engine {
            EngineSpec::E1 { h, .. } => h,
            EngineSpec::E2 { h_r, .. } => h_r,
        };
        let out = evolve(&s)?;
        if let Outcome::BlowUp(b) = out.outcome {
            return Err(Error::Domain(format!("run at spacing {} blew up at t = {}", spacings[i], b.time)));
        }
        let p = out
            .probes
            .into_iter()
            .find(|(st, _)| matches!(st, Station::Interior { .. }))
            .ok_or_else(|| Error::Parameter("self-convergence needs an interior probe".into()))?;
        series.push(p.1.phi);
    }
    let order = convergence_order(&series[0], &series[1], &series[2])?;
    Ok(SelfConvergence { spacings, order })
}
