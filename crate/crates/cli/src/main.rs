use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use kerrwave::checks::{geometry_suite, multipliers_suite, operators_suite, SlicingGrid};
use kerrwave::config::RunConfig;
use kerrwave::io::{ManifestOutcome, RunManifest};
use kerrwave::kernel_oracle::XiGrid;
use kerrwave::pipeline::{self, KernelCheck};

/// Decay of semilinear waves on Kerr: evolutions, norms, fits and property checks.
#[derive(Parser, Debug)]
#[command(name = "kerrwave", version)]
struct Cli {
    /// TOML run configuration (evolve, norms, convergence).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; one run owns it.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for synthetic test generators.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evolve the configured problem and write probes, cuts and snapshots.
    Evolve {
        /// Resume from a snapshot written by an earlier run of the same config.
        #[arg(long)]
        restart: Option<PathBuf>,
    },
    /// Evolve with norm recording and report the configured windows.
    Norms,
    /// Power-law fit of one CSV column against `t`.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "phi")]
        column: String,
        /// `t0,t1`.
        #[arg(long, value_delimiter = ',', required = true)]
        window: Vec<f64>,
        #[arg(long, default_value_t = 1e-14)]
        floor: f64,
    },
    /// Sweep the weighted Duhamel bound over a (t, r/t) grid.
    Kernel(KernelArgs),
    /// Inverse residuals, Schwarzschild limit, slicing conditions, far field.
    CheckGeometry {
        #[arg(long, default_value_t = 1000)]
        points: usize,
    },
    /// Decay of the conjugated operator's lower-order pieces.
    CheckOperators {
        #[arg(long, value_delimiter = ',', default_value = "0,0.3")]
        spins: Vec<f64>,
    },
    /// Convergence order of the divergence identity residual.
    CheckMultipliers {
        #[arg(long, value_delimiter = ',', default_value = "0,0.3")]
        spins: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "5,20,100")]
        radii: Vec<f64>,
        #[arg(long, default_value_t = 1.6)]
        gamma: f64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 3.5)]
        min_order: f64,
    },
    /// Self-convergence order from runs at h, h/2, h/4.
    Convergence {
        #[arg(long, default_value_t = 3.5)]
        min_order: f64,
    },
}

#[derive(Args, Debug)]
struct KernelArgs {
    #[arg(long, default_value_t = 3.0)]
    beta: f64,
    #[arg(long, default_value_t = 2.0)]
    eta: f64,
    /// Radiation weight exponent; only the unit weight is supported.
    #[arg(long, default_value_t = 1.0)]
    gamma_w: f64,
    #[arg(long, default_value_t = 0.05)]
    delta_small: f64,
    /// Check the nonlinear source bound instead, with exponent `--gamma`.
    #[arg(long)]
    lemma62: bool,
    #[arg(long, default_value_t = 1.5)]
    gamma: f64,
    /// `t_min,t_max`.
    #[arg(long, value_delimiter = ',', default_values_t = [10.0, 1000.0])]
    t_range: Vec<f64>,
    #[arg(long, default_value_t = 25)]
    n_t: usize,
    #[arg(long, value_delimiter = ',')]
    r_over_t: Option<Vec<f64>>,
    #[arg(long, default_value_t = 4)]
    bins_per_decade: usize,
    /// Sup may rise by this relative amount between bins and still count as flat.
    #[arg(long, default_value_t = 0.0)]
    slack: f64,
    /// Bins starting at or after this time are checked for monotonicity.
    #[arg(long, default_value_t = 100.0)]
    t_from: f64,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<(RunConfig, String)> {
    let path = path.context("this subcommand needs --config <path>")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg = RunConfig::parse(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    Ok((cfg, text))
}

fn report(m: &RunManifest, out: &Path) -> ExitCode {
    println!("outcome: {:?}", m.outcome);
    if !m.detail.is_empty() {
        println!("{}", m.detail);
    }
    println!("{} artifacts in {}", m.artifacts.len(), out.display());
    match m.outcome {
        ManifestOutcome::Completed => ExitCode::SUCCESS,
        ManifestOutcome::BlowUp => ExitCode::from(3),
        ManifestOutcome::Error => ExitCode::FAILURE,
    }
}

fn verdict(ok: bool) -> ExitCode {
    println!("{}", if ok { "PASS" } else { "FAIL" });
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn pair(name: &str, v: &[f64]) -> anyhow::Result<(f64, f64)> {
    match v {
        [a, b] => Ok((*a, *b)),
        _ => bail!("--{name} takes two comma-separated numbers, got {v:?}"),
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let out = cli.out.as_path();
    let cfg_path = cli.config.as_deref();
    Ok(match cli.command {
        Command::Evolve { restart } => {
            let (cfg, text) = load_config(cfg_path)?;
            report(&pipeline::run_evolve(&cfg, &text, out, restart.as_deref())?, out)
        }
        Command::Norms => {
            let (cfg, text) = load_config(cfg_path)?;
            report(&pipeline::run_norms(&cfg, &text, out)?, out)
        }
        Command::Fit { input, column, window, floor } => {
            let f = pipeline::run_fit(&input, &column, pair("window", &window)?, floor, out)?;
            println!(
                "slope {:.4} ± {:.4} over [{}, {}] ({} samples, {} below floor)",
                f.slope, f.stderr, f.window.0, f.window.1, f.samples, f.excluded
            );
            ExitCode::SUCCESS
        }
        Command::Kernel(k) => {
            if k.gamma_w != 1.0 {
                bail!("only --gamma-w 1 is supported, got {}", k.gamma_w);
            }
            let (t_min, t_max) = pair("t-range", &k.t_range)?;
            let mut grid = XiGrid {
                t_min,
                t_max,
                n_t: k.n_t,
                bins_per_decade: k.bins_per_decade,
                ..XiGrid::default()
            };
            if let Some(r) = k.r_over_t {
                grid.r_over_t = r;
            }
            let check = if k.lemma62 {
                KernelCheck::Nonlinear { gamma: k.gamma }
            } else {
                KernelCheck::Linear { beta: k.beta, eta: k.eta, delta_small: k.delta_small }
            };
            let rep = pipeline::run_kernel(check, &grid, out)?;
            for (lo, hi, sup) in &rep.bins {
                println!("t in [{lo:9.2}, {hi:9.2}]  sup Xi = {sup:.6e}");
            }
            println!("overall sup Xi = {:.6e}", rep.sup);
            verdict(rep.non_increasing_from(k.t_from, k.slack))
        }
        Command::CheckGeometry { points } => {
            let ok = pipeline::run_check("check-geometry", out, || {
                let r = geometry_suite(points, cli.seed, SlicingGrid::default())?;
                println!(
                    "inverse residuals {:?}, Schwarzschild gap {:.2e}, slicing failures {}/{}, r^2 gap by decade {:?}",
                    r.inverse_residual, r.schwarzschild_gap, r.slicing_failures, r.grid_nodes, r.far_field_by_decade
                );
                let ok = r.passed();
                Ok((r, ok))
            })?;
            verdict(ok)
        }
        Command::CheckOperators { spins } => {
            let ok = pipeline::run_check("check-operators", out, || {
                let reps = operators_suite(&spins)?;
                for r in &reps {
                    println!(
                        "a = {}: growth slopes (r^3 g_lr, r^3 V, r^2 g_sr) {:?} over {} radii",
                        r.spin,
                        r.conjugation.growth_slopes,
                        r.conjugation.rows.len()
                    );
                }
                let ok = reps.iter().all(|r| !r.conjugation.unbounded.iter().any(|u| *u));
                Ok((reps, ok))
            })?;
            verdict(ok)
        }
        Command::CheckMultipliers { spins, radii, gamma, delta, min_order } => {
            let ok = pipeline::run_check("check-multipliers", out, || {
                let rows = multipliers_suite(&spins, &radii, gamma, delta)?;
                for r in &rows {
                    println!("a = {:4} r = {:6} {:12} order {:.3}", r.spin, r.r, r.field, r.order);
                }
                let ok = rows.iter().all(|r| r.order >= min_order);
                Ok((rows, ok))
            })?;
            verdict(ok)
        }
        Command::Convergence { min_order } => {
            let (cfg, text) = load_config(cfg_path)?;
            let c = pipeline::run_convergence(&cfg, &text, out)?;
            println!(
                "spacings {:?}: order median {:.3}, L2 {:.3} (min {:.3}, max {:.3}, {} samples)",
                c.spacings, c.order.median, c.order.norm, c.order.min, c.order.max, c.order.samples
            );
            verdict(c.order.median.min(c.order.norm) >= min_order)
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
