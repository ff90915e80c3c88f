//! End-to-end commands: each takes a validated configuration, writes its
//! artifacts into a run directory and finishes with the manifest.

use std::path::Path;

use serde::Serialize;

use crate::analysis::{fit_tail, DecayFit};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evolution::run::{evolve_with, self_convergence, EngineSpec, RunOutput, RunSpec, SelfConvergence};
use crate::evolution::{FieldSlice, Outcome, Station};
use crate::io::{read_snapshot, ManifestOutcome, RunDir, RunManifest, Snapshot};
use crate::kernel_oracle::{verify_lemma62, verify_lindcy1, BoundReport, XiGrid};

fn shape(spec: &RunSpec, n: usize) -> (u64, u64) {
    match spec.engine {
        EngineSpec::E1 { .. } => (n as u64, 1),
        EngineSpec::E2 { n_theta, .. } => ((n / n_theta) as u64, n_theta as u64),
    }
}

fn snapshot_of(spec: &RunSpec, s: &FieldSlice) -> Snapshot {
    let (n_r, n_theta) = shape(spec, s.phi.len());
    Snapshot { slice: s.clone(), n_r, n_theta }
}

fn tag(t: f64) -> String {
    format!("{t}").replace('.', "p")
}

#[derive(Clone, Debug, Serialize)]
struct StationFit {
    station: String,
    fit: Option<DecayFit>,
    error: Option<String>,
    /// Set when the configuration gives an expected slope and tolerance.
    pass: Option<bool>,
}

impl StationFit {
    fn new(station: String, res: Result<DecayFit>, expect: Option<f64>, tol: Option<f64>) -> Self {
        match res {
            Ok(f) => {
                let pass = expect.zip(tol).map(|(e, t)| (f.slope - e).abs() <= t);
                StationFit { station, fit: Some(f), error: None, pass }
            }
            Err(e) => StationFit { station, fit: None, error: Some(e.to_string()), pass: expect.map(|_| false) },
        }
    }
}

#[derive(Clone, Debug, Serialize)]
struct EvolveSummary {
    outcome: Outcome,
    dt: f64,
    steps: u64,
    fits: Vec<StationFit>,
}

/// Writes probe, energy, cut, snapshot and summary files for one run.
fn write_run(rd: &mut RunDir, cfg: &RunConfig, spec: &RunSpec, out: &RunOutput) -> Result<()> {
    let mut fits = Vec::new();
    // The expected slope belongs to the first interior station.
    let mut expect = (cfg.analysis.expected_slope, cfg.analysis.tolerance);
    for (st, series) in &out.probes {
        let name = format!("probe_{}.csv", st.label());
        let rows = (0..series.len())
            .map(|i| vec![series.t[i], series.phi[i], series.dphi_dt[i], series.dphi_dr[i], series.rtilde[i]]);
        rd.write_csv(&name, &["t", "phi", "dphi_dt", "dphi_dr", "rtilde"], rows)?;
        if let Station::Interior { .. } = st {
            let [a, b] = cfg.analysis.interior_window;
            let res = fit_tail(&series.t, &series.phi, (a, b), cfg.analysis.floor);
            fits.push(StationFit::new(st.label(), res, expect.0, expect.1));
            expect = (None, None);
        }
    }
    if !out.energy.is_empty() {
        let killing = &out.killing_energy;
        let rows = out.energy.iter().enumerate().map(|(i, &(t, e))| {
            let k = killing.get(i).map_or(f64::NAN, |x| x.1);
            vec![t, e, k]
        });
        rd.write_csv("energy.csv", &["t", "energy", "killing_energy"], rows)?;
    }
    for c in &out.cuts {
        let rows = (0..c.u.len()).map(|i| vec![c.u[i], c.phi[i], c.radiation[i]]);
        rd.write_csv(&format!("cut_t{}.csv", tag(c.time)), &["u", "phi", "radiation"], rows)?;
        let [a, b] = cfg.analysis.cone_window;
        let res = fit_tail(&c.u, &c.radiation, (a, b), cfg.analysis.floor);
        fits.push(StationFit::new(format!("cut_t{}", tag(c.time)), res, cfg.analysis.cone_slope, cfg.analysis.cone_tolerance));
    }
    for s in &out.snapshots {
        rd.write(&format!("snap_t{}.kdsnap", tag(s.time)), &crate::io::encode_snapshot(&snapshot_of(spec, s))?)?;
    }
    rd.write("final.kdsnap", &crate::io::encode_snapshot(&snapshot_of(spec, &out.last))?)?;
    rd.write_json("summary.json", &EvolveSummary { outcome: out.outcome, dt: out.dt, steps: out.steps, fits })
}

fn outcome_of(out: &RunOutput) -> (ManifestOutcome, String) {
    match out.outcome {
        Outcome::Completed => (ManifestOutcome::Completed, String::new()),
        Outcome::BlowUp(b) => (
            ManifestOutcome::BlowUp,
            format!("blow-up at t = {}, radius = {}, theta = {:?}, value = {:e}", b.time, b.radius, b.theta, b.value),
        ),
    }
}

/// Finishes with outcome `error` when `body` fails, keeping partial outputs.
fn guarded(mut rd: RunDir, body: impl FnOnce(&mut RunDir) -> Result<(ManifestOutcome, String)>) -> Result<RunManifest> {
    match body(&mut rd) {
        Ok((o, d)) => rd.finish(o, &d),
        Err(e) => {
            let msg = e.to_string();
            rd.finish(ManifestOutcome::Error, &msg)?;
            Err(e)
        }
    }
}

/// `evolve`: optionally restarting from a snapshot.
pub fn run_evolve(cfg: &RunConfig, config_text: &str, out_dir: &Path, restart: Option<&Path>) -> Result<RunManifest> {
    let spec = cfg.run_spec();
    let rd = RunDir::create(out_dir, "evolve", config_text)?;
    guarded(rd, |rd| {
        rd.write("config.toml", cfg.to_toml().as_bytes())?;
        let start = match restart {
            Some(p) => {
                let snap = read_snapshot(p)?;
                let want = shape(&spec, snap.slice.phi.len());
                if want != (snap.n_r, snap.n_theta) {
                    return Err(Error::Snapshot(format!(
                        "snapshot grid {}x{} does not match the configured engine",
                        snap.n_r, snap.n_theta
                    )));
                }
                Some(snap.slice)
            }
            None => None,
        };
        let out = evolve_with(&spec, start, |_| {})?;
        write_run(rd, cfg, &spec, &out)?;
        Ok(outcome_of(&out))
    })
}

/// `norms`: evolves with norm recording and reports each configured window.
pub fn run_norms(cfg: &RunConfig, config_text: &str, out_dir: &Path) -> Result<RunManifest> {
    let mut spec = cfg.run_spec();
    spec.norms = true;
    let rd = RunDir::create(out_dir, "norms", config_text)?;
    guarded(rd, |rd| {
        let out = evolve_with(&spec, None, |_| {})?;
        write_run(rd, cfg, &spec, &out)?;
        let windows: Vec<[f64; 2]> = if cfg.analysis.norm_windows.is_empty() {
            vec![[0.0, spec.t_final]]
        } else {
            cfg.analysis.norm_windows.clone()
        };
        let mut rows = Vec::new();
        for w in windows {
            let r = out.annuli.window_norms(w[0], w[1])?;
            rows.push(vec![w[0], w[1], r.le, r.le1, r.le1w, r.lestar]);
        }
        rd.write_csv("norms.csv", &["t0", "t1", "le", "le1", "le1w", "lestar"], rows)?;
        Ok(outcome_of(&out))
    })
}

/// `fit`: power-law fit of one column of a probe CSV.
pub fn run_fit(input: &Path, column: &str, window: (f64, f64), floor: f64, out_dir: &Path) -> Result<DecayFit> {
    let cols = crate::io::read_csv_columns(input, &["t", column])?;
    let rd = RunDir::create(out_dir, "fit", &format!("{}:{column}:{window:?}:{floor}", input.display()))?;
    let mut fit = None;
    guarded(rd, |rd| {
        let f = fit_tail(&cols[0], &cols[1], window, floor)?;
        rd.write_json("fit.json", &f)?;
        fit = Some(f);
        Ok((ManifestOutcome::Completed, String::new()))
    })?;
    Ok(fit.expect("set on success"))
}

/// Which bound `kernel` checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelCheck {
    Linear { beta: f64, eta: f64, delta_small: f64 },
    Nonlinear { gamma: f64 },
}

pub fn run_kernel(check: KernelCheck, grid: &XiGrid, out_dir: &Path) -> Result<BoundReport> {
    let rd = RunDir::create(out_dir, "kernel", &format!("{check:?} {grid:?}"))?;
    let mut rep = None;
    guarded(rd, |rd| {
        let r = match check {
            KernelCheck::Linear { beta, eta, delta_small } => verify_lindcy1(beta, eta, delta_small, 1.0, grid)?,
            KernelCheck::Nonlinear { gamma } => verify_lemma62(gamma, 1.0, grid)?,
        };
        rd.write_csv("kernel.csv", &["t", "r", "v", "Xi"], r.samples.iter().map(|s| vec![s.t, s.r, s.v, s.xi]))?;
        rd.write_csv("kernel_bins.csv", &["t_lo", "t_hi", "sup_Xi"], r.bins.iter().map(|b| vec![b.0, b.1, b.2]))?;
        rep = Some(r);
        Ok((ManifestOutcome::Completed, String::new()))
    })?;
    Ok(rep.expect("set on success"))
}

/// Serializable result of a check suite, with its verdict.
pub fn run_check<T: Serialize>(name: &str, out_dir: &Path, body: impl FnOnce() -> Result<(T, bool)>) -> Result<bool> {
    let rd = RunDir::create(out_dir, name, name)?;
    let mut ok = false;
    guarded(rd, |rd| {
        let (report, passed) = body()?;
        rd.write_json(&format!("{name}.json"), &report)?;
        ok = passed;
        Ok((ManifestOutcome::Completed, if passed { "passed".into() } else { "failed".into() }))
    })?;
    Ok(ok)
}

/// `convergence`: the configured run at `h`, `h/2`, `h/4`.
pub fn run_convergence(cfg: &RunConfig, config_text: &str, out_dir: &Path) -> Result<SelfConvergence> {
    let rd = RunDir::create(out_dir, "convergence", config_text)?;
    let mut res = None;
    guarded(rd, |rd| {
        let c = self_convergence(&cfg.run_spec())?;
        rd.write_json("convergence.json", &c)?;
        res = Some(c);
        Ok((ManifestOutcome::Completed, String::new()))
    })?;
    Ok(res.expect("set on success"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::MANIFEST_NAME;

    const SMALL: &str = "[grid]\nrstar_min = -100.0\nrstar_max = 150.0\nh = 0.5\nt_final = 30.0\n\
        [output]\nsnapshot_times = [10.0]\n[probes]\ncut_times = [20.0]\ncut_u = [0.0, 1.0]\nu = [0.0]\n\
        [analysis]\ninterior_window = [5.0, 30.0]\n";

    fn manifest(dir: &Path) -> RunManifest {
        serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_NAME)).unwrap()).unwrap()
    }

    #[test]
    fn evolve_writes_all_artifacts_and_reruns_identically() {
        let cfg = RunConfig::parse(SMALL).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = run_evolve(&cfg, SMALL, a.path(), None).unwrap();
        let mb = run_evolve(&cfg, SMALL, b.path(), None).unwrap();
        assert_eq!(ma.outcome, ManifestOutcome::Completed);
        let names: Vec<&str> = ma.artifacts.iter().map(|x| x.path.as_str()).collect();
        for n in ["probe_r10.csv", "probe_u0.csv", "cut_t20.csv", "snap_t10.kdsnap", "final.kdsnap", "summary.json"] {
            assert!(names.contains(&n), "{n} missing from {names:?}");
        }
        assert_eq!(ma.artifacts, mb.artifacts);
        assert_eq!(manifest(a.path()), ma);
    }

    #[test]
    fn zero_data_gives_zero_probes() {
        let text = format!("{SMALL}[data]\nepsilon = 0.0\n");
        let cfg = RunConfig::parse(&text).unwrap();
        let d = tempfile::tempdir().unwrap();
        run_evolve(&cfg, &text, d.path(), None).unwrap();
        let cols = crate::io::read_csv_columns(&d.path().join("probe_r10.csv"), &["phi"]).unwrap();
        assert!(cols[0].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn restart_from_snapshot_matches_straight_run() {
        let cfg = RunConfig::parse(SMALL).unwrap();
        let a = tempfile::tempdir().unwrap();
        run_evolve(&cfg, SMALL, a.path(), None).unwrap();
        let b = tempfile::tempdir().unwrap();
        run_evolve(&cfg, SMALL, b.path(), Some(&a.path().join("snap_t10.kdsnap"))).unwrap();
        let fa = std::fs::read(a.path().join("final.kdsnap")).unwrap();
        let fb = std::fs::read(b.path().join("final.kdsnap")).unwrap();
        assert_eq!(fa, fb);
    }

    #[test]
    fn focusing_large_data_reports_blow_up() {
        let text = format!("{SMALL}[data]\nepsilon = 5.0\n[nonlinearity]\nenabled = true\np = 3\nsign = -1\n");
        let cfg = RunConfig::parse(&text).unwrap();
        let d = tempfile::tempdir().unwrap();
        let m = run_evolve(&cfg, &text, d.path(), None).unwrap();
        assert_eq!(m.outcome, ManifestOutcome::BlowUp);
        assert!(m.detail.contains("blow-up at t ="), "{}", m.detail);
    }

    #[test]
    fn failing_restart_still_writes_manifest() {
        let cfg = RunConfig::parse(SMALL).unwrap();
        let d = tempfile::tempdir().unwrap();
        let bogus = d.path().join("bogus.kdsnap");
        std::fs::write(&bogus, b"nope").unwrap();
        assert!(run_evolve(&cfg, SMALL, d.path(), Some(&bogus)).is_err());
        let m = manifest(d.path());
        assert_eq!(m.outcome, ManifestOutcome::Error);
        assert!(m.artifacts.iter().any(|a| a.path == "config.toml"));
    }

    #[test]
    fn norms_and_fit_and_kernel() {
        let text = SMALL.replace("[5.0, 30.0]\n", "[5.0, 30.0]\nnorm_windows = [[0.0, 10.0], [0.0, 20.0]]\n");
        let cfg = RunConfig::parse(&text).unwrap();
        let d = tempfile::tempdir().unwrap();
        run_norms(&cfg, &text, d.path()).unwrap();
        let c = crate::io::read_csv_columns(&d.path().join("norms.csv"), &["t1", "le1"]).unwrap();
        assert_eq!(c[0], vec![10.0, 20.0]);
        assert!(c[1][1] >= c[1][0]);

        let f = tempfile::tempdir().unwrap();
        let fit = run_fit(&d.path().join("probe_r10.csv"), "phi", (5.0, 30.0), 1e-14, f.path()).unwrap();
        assert!(fit.slope.is_finite());

        let k = tempfile::tempdir().unwrap();
        let g = XiGrid { n_t: 3, r_over_t: vec![0.5], ..Default::default() };
        let rep = run_kernel(KernelCheck::Linear { beta: 3.0, eta: 2.0, delta_small: 0.05 }, &g, k.path()).unwrap();
        assert_eq!(rep.samples.len(), 3);
        assert!(k.path().join("kernel.csv").exists());
    }
}
