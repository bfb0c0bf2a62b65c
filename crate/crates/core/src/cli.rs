//! Batch front end behind the `bns` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::analytic::{bns_european_put, black_scholes_put};
use crate::config::RunConfig;
use crate::dynamics::{epsilon, simulate_path, PathSample};
use crate::error::{ConfigError, McError, SolverError};
use crate::mc::{self, McEstimate};
use crate::rng::path_rng;
use crate::solver::{self, ExerciseMode, ValueSurface};
use crate::verify::{self, SuiteSpec, VerifyError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "bns", version, about = "American options under BNS stochastic volatility")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long, global = true, default_value = "configs/default.toml")]
    pub config: PathBuf,
    /// Overrides `mc.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Solve the obstacle problem; write surface.csv and probes.csv.
    Price,
    /// Dump simulated paths to paths.csv.
    Simulate,
    /// Probe values over nested grid refinements; write convergence.csv.
    Converge,
    /// Run the verification suite; write summary.csv.
    Verify,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write output: {0}")]
    Output(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Mc(#[from] McError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output(_) => EXIT_CONFIG,
            CliError::Solver(_) | CliError::Mc(_) | CliError::Verify(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<crate::error::KernelError> for CliError {
    fn from(e: crate::error::KernelError) -> Self {
        CliError::Mc(e.into())
    }
}

/// Parses the arguments already split off the process, runs the command and
/// returns the exit code. Diagnostics go to stderr.
pub fn run(cli: Cli) -> i32 {
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let mut cfg = RunConfig::from_file(&cli.common.config)?;
    if let Some(seed) = cli.common.seed {
        cfg.mc.seed = seed;
    }
    if let Some(out) = &cli.common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(n) = cfg.threads {
        // Fails only if a pool already exists, which keeps the first setting.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    fs::create_dir_all(&cfg.out_dir)?;
    match cli.command {
        Command::Price => cmd_price(&cfg),
        Command::Simulate => cmd_simulate(&cfg),
        Command::Converge => cmd_converge(&cfg),
        Command::Verify => cmd_verify(&cfg),
    }
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

pub fn cmd_price(cfg: &RunConfig) -> Result<i32, CliError> {
    let p = cfg.model.params;
    let grid = cfg.grid.build(p.horizon)?;
    let surface = solver::solve(&grid, &cfg.model, &cfg.payoff, &cfg.solver)?;
    surface.write_csv_file(&out_path(cfg, "surface.csv"))?;
    let localized = match cfg.delta {
        Some(d) => {
            let g = grid.restrict_below(d)?;
            let s = solver::solve_localized(&g, &cfg.model, &cfg.payoff, &cfg.solver)?;
            s.write_csv_file(&out_path(cfg, "surface_localized.csv"))?;
            Some(s)
        }
        None => None,
    };
    write_probes(cfg, &surface, localized.as_ref(), &out_path(cfg, "probes.csv"))?;
    for &(x, v) in &cfg.probes {
        println!("u({x}, {v}) = {:.8}", surface.price(x, v)?);
    }
    if cfg.mc_price {
        write_mc(cfg, &out_path(cfg, "mc.csv"))?;
    }
    Ok(EXIT_OK)
}

fn write_probes(
    cfg: &RunConfig,
    surface: &ValueSurface,
    localized: Option<&ValueSurface>,
    path: &Path,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "v", "value", "payoff", "value_localized"])?;
    for &(x, v) in &cfg.probes {
        let u = surface.price(x, v)?;
        let loc = match localized {
            Some(s) if v >= s.grid().v()[0] => s.price(x, v)?.to_string(),
            _ => String::new(),
        };
        w.write_record(&[x.to_string(), v.to_string(), u.to_string(), cfg.payoff.evaluate(x).to_string(), loc])?;
    }
    w.flush()?;
    Ok(())
}

fn write_mc(cfg: &RunConfig, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "value", "std_error", "n_paths", "n_dates", "seed", "wall_time"])?;
    let mut row = |method: &str, e: &McEstimate, secs: f64| {
        let dates = e.n_exercise_dates.map(|n| n.to_string()).unwrap_or_default();
        w.write_record(&[
            method.to_string(),
            e.value.to_string(),
            e.std_error.to_string(),
            e.n_paths.to_string(),
            dates,
            cfg.mc.seed.to_string(),
            format!("{secs:.3}"),
        ])
    };
    let start = Instant::now();
    match cfg.solver.mode {
        ExerciseMode::European => {
            let e = mc::price_european(&cfg.model, &cfg.payoff, cfg.x0, cfg.v0, &cfg.mc)?;
            row("european", &e, start.elapsed().as_secs_f64())?;
            println!("MC european = {:.6} ± {:.6}", e.value, e.std_error);
        }
        ExerciseMode::American => {
            let a = mc::price_american(&cfg.model, &cfg.payoff, cfg.x0, cfg.v0, &cfg.mc, &cfg.lsmc)?;
            let secs = start.elapsed().as_secs_f64();
            row("lsmc", &a.estimate, secs)?;
            row("lsmc_in_sample", &a.in_sample, secs)?;
            row("european", &a.european_in_sample, secs)?;
            println!("LSMC = {:.6} ± {:.6}", a.estimate.value, a.estimate.std_error);
        }
    }
    w.flush()?;
    Ok(())
}

/// Sample times `kT/n`, `k = 0..=n`.
pub fn sample_times(horizon: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| horizon * k as f64 / n as f64).collect()
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<i32, CliError> {
    let times = sample_times(cfg.model.params.horizon, cfg.path_times.max(1));
    let paths: Vec<PathSample> = (0..cfg.path_count)
        .into_par_iter()
        .map(|id| {
            let mut rng = path_rng(cfg.mc.seed, id as u64);
            simulate_path(&cfg.model, cfg.x0, cfg.v0, &times, &mut rng)
        })
        .collect();
    let mut w = csv::Writer::from_path(out_path(cfg, "paths.csv"))?;
    w.write_record(["path_id", "t", "V", "V_star", "X", "Z_cum"])?;
    for (id, s) in paths.iter().enumerate() {
        for k in 0..s.times.len() {
            w.write_record(&[
                id.to_string(),
                s.times[k].to_string(),
                s.v[k].to_string(),
                s.v_star[k].to_string(),
                s.x[k].to_string(),
                s.z_cum[k].to_string(),
            ])?;
        }
    }
    w.flush()?;
    println!("wrote {} paths x {} times", paths.len(), times.len());
    Ok(EXIT_OK)
}

/// Row of the convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct Rung {
    pub n_x: usize,
    pub n_v: usize,
    pub n_t: usize,
    pub value: f64,
    pub runtime_ms: f64,
}

/// Observed order from the last rungs: against `reference` when given,
/// otherwise from three successive differences. `None` when the ladder is
/// too short or the differences vanish.
pub fn observed_order(values: &[f64], reference: Option<f64>) -> Option<f64> {
    let n = values.len();
    let (a, b) = match reference {
        Some(r) if n >= 2 => ((values[n - 2] - r).abs(), (values[n - 1] - r).abs()),
        _ if n >= 3 => ((values[n - 2] - values[n - 3]).abs(), (values[n - 1] - values[n - 2]).abs()),
        _ => return None,
    };
    (a > 0.0 && b > 0.0).then(|| (a / b).log2())
}

/// Closed-form target for the first probe when one exists.
fn reference_value(cfg: &RunConfig) -> Option<f64> {
    if cfg.solver.mode != ExerciseMode::European || !cfg.payoff.is_put() {
        return None;
    }
    let (x, v) = cfg.probes[0];
    let k = cfg.payoff.strike()?;
    let p = cfg.model.params;
    if cfg.model.jumps.is_null() {
        Some(black_scholes_put(x, k, p.r, p.horizon, v * epsilon(p.lambda, p.horizon)))
    } else if v > 0.0 {
        bns_european_put(&cfg.model, x, v, k).ok()
    } else {
        None
    }
}

pub fn cmd_converge(cfg: &RunConfig) -> Result<i32, CliError> {
    let p = cfg.model.params;
    let (x, v) = cfg.probes[0];
    let mut rungs = Vec::with_capacity(cfg.rungs);
    for k in 0..cfg.rungs {
        let g = cfg.grid.refined(k as u32, p.horizon)?;
        let start = Instant::now();
        let s = solver::solve(&g, &cfg.model, &cfg.payoff, &cfg.solver)?;
        let value = s.price(x, v)?;
        rungs.push(Rung {
            n_x: g.n_x(),
            n_v: g.n_v(),
            n_t: g.n_t(),
            value,
            runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    let mut w = csv::Writer::from_path(out_path(cfg, "convergence.csv"))?;
    w.write_record(["N_x", "N_v", "N_t", "value_at_probe", "runtime_ms"])?;
    for r in &rungs {
        w.write_record(&[
            r.n_x.to_string(),
            r.n_v.to_string(),
            r.n_t.to_string(),
            r.value.to_string(),
            format!("{:.1}", r.runtime_ms),
        ])?;
        println!("{:>6} {:>6} {:>6}  {:.8}", r.n_x, r.n_v, r.n_t, r.value);
    }
    w.flush()?;
    let values: Vec<f64> = rungs.iter().map(|r| r.value).collect();
    let reference = reference_value(cfg);
    if let Some(r) = reference {
        println!("reference = {r:.8}");
    }
    match observed_order(&values, reference) {
        Some(q) => println!("observed order = {q:.3}"),
        None => println!("observed order = n/a"),
    }
    Ok(EXIT_OK)
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<i32, CliError> {
    let h = cfg.model.params.horizon;
    let coarse = cfg.grid.refined(0, h)?;
    let deltas = snap_deltas(&cfg.verify.deltas, coarse.v());
    let spec = SuiteSpec {
        model: cfg.model.clone(),
        payoff: cfg.payoff.clone(),
        fine: cfg.grid.refined(1, h)?,
        coarse,
        probes: cfg.probes.clone(),
        mc: cfg.mc,
        lsmc: cfg.lsmc,
        solver: cfg.solver.clone(),
        comparison_eps: cfg.verify.comparison_eps,
        deltas,
        dpp_eps: cfg.verify.dpp_eps,
        dpp_paths: cfg.verify.dpp_paths,
        modulus_tolerance: cfg.verify.modulus_tolerance,
    };
    let reports = verify::run_suite(&spec)?;
    verify::write_summary_csv(&reports, fs::File::create(out_path(cfg, "summary.csv"))?)?;
    for r in &reports {
        println!(
            "{:<28} {:<4} measured {:<12.4e} bound {:<10.3e} budget {:<10.3e} {}",
            r.name,
            r.status.as_str(),
            r.measured,
            r.bound,
            r.budget(),
            r.detail
        );
    }
    Ok(if reports.iter().all(|r| r.passed()) { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

/// Moves each `δ` to the nearest positive variance node, keeping the order
/// and dropping repeats.
pub fn snap_deltas(deltas: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for &d in deltas {
        let node = v[1..v.len() - 1].iter().cloned().min_by(|a, b| (a - d).abs().total_cmp(&(b - d).abs()));
        if let Some(n) = node {
            if !out.contains(&n) {
                out.push(n);
            }
        }
    }
    out
}
