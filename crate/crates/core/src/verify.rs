//! Numerical property checks combining solved surfaces and Monte Carlo.
//!
//! Every check is an inequality `measured ≤ bound + budget`, where the
//! budget splits into grid, statistical and penalty parts, each measured.

use std::io::Write;

use crate::dynamics::{simulate_path, BnsModel, ModelParams};
use crate::error::{McError, SolverError};
use crate::kernel::JumpMeasure;
use crate::mc::{self, LsmcSettings, McSettings};
use crate::payoff::Payoff;
use crate::rng::{derive_seed, path_rng};
use crate::solver::grid::required_v_max;
use crate::solver::{self, apply_generator, ExerciseMode, GeneratorCoeffs, Grid, GridFunction, JumpQuadrature, SolverOptions, ValueSurface};
use crate::stats::mean_and_stderr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Not applicable to this configuration.
    Skipped,
    Warn,
}

impl CheckStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Skipped => "n/a",
            CheckStatus::Warn => "warn",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub budget_grid: f64,
    pub budget_stat: f64,
    pub budget_penalty: f64,
    pub status: CheckStatus,
    pub detail: String,
}

impl CheckReport {
    pub fn new(name: &str, measured: f64, bound: f64, budget_grid: f64, budget_stat: f64, budget_penalty: f64) -> Self {
        let ok = measured <= bound + budget_grid + budget_stat + budget_penalty;
        Self {
            name: name.to_string(),
            measured,
            bound,
            budget_grid,
            budget_stat,
            budget_penalty,
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            detail: String::new(),
        }
    }

    pub fn skipped(name: &str, why: &str) -> Self {
        Self {
            name: name.to_string(),
            measured: f64::NAN,
            bound: f64::NAN,
            budget_grid: 0.0,
            budget_stat: 0.0,
            budget_penalty: 0.0,
            status: CheckStatus::Skipped,
            detail: why.to_string(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    /// Downgrades a failure to a warning.
    pub fn as_warning(mut self) -> Self {
        if self.status == CheckStatus::Fail {
            self.status = CheckStatus::Warn;
        }
        self
    }

    pub fn passed(&self) -> bool {
        self.status != CheckStatus::Fail
    }

    pub fn budget(&self) -> f64 {
        self.budget_grid + self.budget_stat + self.budget_penalty
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Mc(#[from] McError),
}

/// `|u_grid − MC| ≤ 3 s.e. + |u_fine − u_coarse|` at every probe. American
/// surfaces are compared with re-simulated least squares, European ones
/// with the plain expectation.
pub fn check_oracle_agreement(
    fine: &ValueSurface,
    coarse: &ValueSurface,
    model: &BnsModel,
    probes: &[(f64, f64)],
    mc_settings: &McSettings,
    lsmc: &LsmcSettings,
) -> Result<CheckReport, VerifyError> {
    if fine.mode() != coarse.mode() {
        return Err(SolverError::GridMismatch.into());
    }
    let mut worst: Option<(f64, CheckReport)> = None;
    let mut lines = Vec::new();
    for (q, &(x, v)) in probes.iter().enumerate() {
        let uf = fine.price(x, v)?;
        let uc = coarse.price(x, v)?;
        let settings = McSettings { seed: derive_seed(mc_settings.seed, q as u64), ..*mc_settings };
        let est = match fine.mode() {
            ExerciseMode::American => mc::price_american(model, fine.payoff(), x, v, &settings, lsmc)?.estimate,
            ExerciseMode::European => mc::price_european(model, fine.payoff(), x, v, &settings)?,
        };
        let report = CheckReport::new("oracle_agreement", (uf - est.value).abs(), 0.0, (uf - uc).abs(), 3.0 * est.std_error, 0.0);
        lines.push(format!("({x}, {v}): grid {uf:.6} mc {:.6} ± {:.6}", est.value, est.std_error));
        let score = severity(&report);
        if worst.as_ref().is_none_or(|(s, _)| score > *s) {
            worst = Some((score, report));
        }
    }
    let (_, report) = worst.ok_or_else(|| McError::InvalidInput("no probes".into()))?;
    Ok(report.with_detail(lines.join("; ")))
}

/// `measured / (bound + budget)`; above one means failure.
fn severity(r: &CheckReport) -> f64 {
    let allowed = r.bound + r.budget();
    if allowed > 0.0 {
        r.measured / allowed
    } else if r.measured > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Smallest constants with `|Δu| ≤ C(|Δx| + |Δv| + √|Δv|)` over adjacent
/// node pairs on every time level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Modulus {
    pub c: f64,
    pub c_x: f64,
    pub c_v: f64,
}

/// Pairs touching a clamped variance edge are left out: the edge carries
/// boundary data, not the value function.
pub fn fit_modulus(s: &ValueSurface) -> Modulus {
    let g = s.grid();
    let (n_x, n_v) = (g.n_x(), g.n_v());
    let (xs, vs) = (g.x(), g.v());
    let j0 = if s.clamped_edge() { 1 } else { 0 };
    let (mut c_x, mut c_v) = (0.0f64, 0.0f64);
    for n in 0..=g.n_t() {
        let u = s.level(n);
        for j in j0..n_v {
            for i in 0..n_x - 1 {
                let d = (u[j * n_x + i + 1] - u[j * n_x + i]).abs() / (xs[i + 1] - xs[i]);
                c_x = c_x.max(d);
            }
            if j + 1 < n_v {
                let dv = vs[j + 1] - vs[j];
                for i in 0..n_x {
                    let d = (u[(j + 1) * n_x + i] - u[j * n_x + i]).abs() / (dv + dv.sqrt());
                    c_v = c_v.max(d);
                }
            }
        }
    }
    Modulus { c: c_x.max(c_v), c_x, c_v }
}

/// Fitted `C` stable within `tolerance` (relative) between two grids, and
/// the log-price constant within the payoff's `K` plus its own two-grid change.
pub fn check_lipschitz_modulus(fine: &ValueSurface, coarse: &ValueSurface, tolerance: f64) -> CheckReport {
    let mf = fit_modulus(fine);
    let mc = fit_modulus(coarse);
    let k = fine.payoff().lipschitz_k();
    let drift = if mc.c > 0.0 { (mf.c / mc.c - 1.0).abs() } else { (mf.c - mc.c).abs() };
    let x_excess = mf.c_x - k;
    let x_budget = (mf.c_x - mc.c_x).abs();
    let mut report = CheckReport::new("lipschitz_modulus", drift, tolerance, 0.0, 0.0, 0.0);
    if x_excess > x_budget + 1e-12 {
        report.status = CheckStatus::Fail;
    }
    report.with_detail(format!(
        "C fine {:.5} coarse {:.5}; C_x {:.5} (K = {k}); C_v {:.5}",
        mf.c, mc.c, mf.c_x, mf.c_v
    ))
}

/// `max(u_raised − u_base − ε e^{r(T−t)}) ≤ tolerance` over all nodes.
pub fn check_comparison(raised: &ValueSurface, base: &ValueSurface, eps: f64, tolerance: f64) -> Result<CheckReport, SolverError> {
    let g = base.grid();
    if raised.grid() != g {
        return Err(SolverError::GridMismatch);
    }
    let r = base.rate();
    let mut worst = f64::NEG_INFINITY;
    let mut lowest = f64::INFINITY;
    for n in 0..=g.n_t() {
        let allow = eps * (r * (g.horizon() - g.time(n))).exp();
        for (a, b) in raised.level(n).iter().zip(base.level(n)) {
            worst = worst.max(a - b - allow);
            lowest = lowest.min(a - b);
        }
    }
    Ok(CheckReport::new("comparison", worst, 0.0, 0.0, 0.0, tolerance)
        .with_detail(format!("min(u_raised − u_base) = {lowest:.3e}")))
}

/// `u^δ ≤ u` on the common nodes.
pub fn check_minimality(localized: &ValueSurface, full: &ValueSurface, tolerance: f64) -> Result<CheckReport, SolverError> {
    let worst = common_max(localized, full, |_, _| true, |a, b| a - b)?;
    Ok(CheckReport::new("minimality", worst, 0.0, 0.0, 0.0, tolerance))
}

/// `max |u^δ − u|` over `v > δ e^{λT}` against a grid tolerance.
pub fn check_localization_agreement(
    localized: &ValueSurface,
    full: &ValueSurface,
    lambda: f64,
    grid_budget: f64,
) -> Result<CheckReport, SolverError> {
    let cut = localized.grid().delta() * (lambda * full.grid().horizon()).exp();
    let worst = common_max(localized, full, |_, v| v > cut, |a, b| (a - b).abs())?;
    Ok(CheckReport::new("localization_agreement", worst, 0.0, grid_budget, 0.0, 0.0)
        .with_detail(format!("delta = {}, region v > {cut:.5}", localized.grid().delta())))
}

/// Max of `f(u_a, u_b)` over the nodes of `a` that also belong to `b`, at
/// every time level, restricted by `keep(x, v)`.
pub fn common_max<K, F>(a: &ValueSurface, b: &ValueSurface, keep: K, f: F) -> Result<f64, SolverError>
where
    K: Fn(f64, f64) -> bool,
    F: Fn(f64, f64) -> f64,
{
    let (ga, gb) = (a.grid(), b.grid());
    if ga.x() != gb.x() || ga.n_t() != gb.n_t() || (ga.horizon() - gb.horizon()).abs() > 0.0 {
        return Err(SolverError::GridMismatch);
    }
    let n_x = ga.n_x();
    let mut worst = f64::NEG_INFINITY;
    for (ja, &v) in ga.v().iter().enumerate() {
        let Some(jb) = gb.v_index(v) else { continue };
        for (i, &x) in ga.x().iter().enumerate() {
            if !keep(x, v) {
                continue;
            }
            for n in 0..=ga.n_t() {
                worst = worst.max(f(a.level(n)[ja * n_x + i], b.level(n)[jb * n_x + i]));
            }
        }
    }
    Ok(worst)
}

/// Largest `|u_fine − u_coarse|` over coarse nodes shared with the fine
/// grid at matching times, restricted by `keep(x, v)`.
pub fn two_grid_increment<K: Fn(f64, f64) -> bool>(fine: &ValueSurface, coarse: &ValueSurface, keep: K) -> f64 {
    let (gf, gc) = (fine.grid(), coarse.grid());
    let ratio = gf.n_t() / gc.n_t().max(1);
    let mut worst = 0.0f64;
    for (jc, &v) in gc.v().iter().enumerate() {
        let Some(jf) = gf.v_index(v) else { continue };
        for (ic, &x) in gc.x().iter().enumerate() {
            if !keep(x, v) {
                continue;
            }
            let Some(i_f) = gf.x_index(x) else { continue };
            for n in 0..=gc.n_t() {
                let nf = n * ratio;
                if nf > gf.n_t() || (gf.time(nf) - gc.time(n)).abs() > 1e-12 {
                    continue;
                }
                worst = worst.max((fine.value(nf, i_f, jf) - coarse.value(n, ic, jc)).abs());
            }
        }
    }
    worst
}

/// DPP residual within three standard errors at each probe
/// `(x, v, level)`; the report carries the worst probe.
pub fn check_dpp(
    surface: &ValueSurface,
    model: &BnsModel,
    probes: &[(f64, f64, usize)],
    eps: f64,
    n_paths: usize,
    seed: u64,
) -> Result<CheckReport, McError> {
    let mut worst: Option<(f64, CheckReport)> = None;
    let mut lines = Vec::new();
    for (q, &(x, v, level)) in probes.iter().enumerate() {
        let res = mc::check_dpp(surface, model, x, v, level, eps, n_paths, derive_seed(seed, q as u64))?;
        let report = CheckReport::new("dpp_residual", res.residual.abs(), 0.0, 0.0, 3.0 * res.std_error, 0.0);
        lines.push(format!(
            "({x}, {v}, t={:.3}): residual {:.2e} ± {:.2e}, out of grid {}",
            surface.grid().time(level),
            res.residual,
            res.std_error,
            res.out_of_range
        ));
        let score = severity(&report);
        if worst.as_ref().is_none_or(|(s, _)| score > *s) {
            worst = Some((score, report));
        }
    }
    let (_, report) = worst.ok_or_else(|| McError::InvalidInput("no probes".into()))?;
    Ok(report.with_detail(lines.join("; ")))
}

/// `u ≥ h − tolerance` at every node and level.
pub fn check_obstacle(surface: &ValueSurface, tolerance: f64) -> CheckReport {
    let gap = surface.min_obstacle_gap();
    CheckReport::new("obstacle_dominance", -gap, 0.0, 0.0, 0.0, tolerance)
}

/// American and European probe values agree within the combined budget;
/// also counts interior nodes where early exercise is worth more than it.
pub fn check_no_early_exercise(
    american: &ValueSurface,
    european: &ValueSurface,
    european_coarse: &ValueSurface,
    probes: &[(f64, f64)],
    penalty_tolerance: f64,
) -> Result<CheckReport, SolverError> {
    let mut worst = 0.0f64;
    let mut budget = 0.0f64;
    for &(x, v) in probes {
        worst = worst.max((american.price(x, v)? - european.price(x, v)?).abs());
        budget = budget.max((european.price(x, v)? - european_coarse.price(x, v)?).abs());
    }
    let g = american.grid();
    let n_x = g.n_x();
    let j0 = if american.clamped_edge() { 1 } else { 0 };
    let mut premium_nodes = 0usize;
    for n in 0..g.n_t() {
        for j in j0..g.n_v() {
            for i in 1..n_x - 1 {
                let k = j * n_x + i;
                if american.level(n)[k] - european.level(n)[k] > budget + penalty_tolerance {
                    premium_nodes += 1;
                }
            }
        }
    }
    Ok(CheckReport::new("no_early_exercise", worst, 0.0, budget, 0.0, penalty_tolerance)
        .with_detail(format!("interior nodes with an exercise premium above budget: {premium_nodes}")))
}

/// Worst error and observed order of `apply_generator` on `ψ` against the
/// exact `𝓛ψ` at the common node `(x, v)` of a grid pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorErrors {
    pub coarse: f64,
    pub fine: f64,
}

impl GeneratorErrors {
    pub fn order(&self) -> f64 {
        (self.coarse / self.fine).log2()
    }

    /// First order or better, or exact to rounding on both grids.
    pub fn consistent(&self) -> bool {
        (self.coarse <= 1e-9 && self.fine <= 1e-9) || (self.fine < self.coarse && self.order() >= 0.9)
    }
}

pub fn generator_errors<F, E>(
    model: &BnsModel,
    coarse: &Grid,
    fine: &Grid,
    xi: f64,
    point: (f64, f64),
    psi: F,
    exact: E,
) -> Result<GeneratorErrors, SolverError>
where
    F: Fn(f64, f64) -> f64,
    E: Fn(&GeneratorCoeffs, f64, f64) -> f64,
{
    let err = |g: &Grid| -> Result<f64, SolverError> {
        let dv = g.v()[1] - g.v()[0];
        let quad = JumpQuadrature::build(&model.jumps, xi, dv, solver::jumps::DEFAULT_TAIL_TOL)?;
        let c = GeneratorCoeffs::new(model, quad)?;
        let i = g.x_index(point.0).ok_or(SolverError::OutOfRange { x: point.0, v: point.1 })?;
        let j = g.v_index(point.1).ok_or(SolverError::OutOfRange { x: point.0, v: point.1 })?;
        let f = GridFunction::sample(g, &psi);
        let got = apply_generator(&f, i, j, &c)?.value;
        Ok((got - exact(&c, point.0, point.1)).abs())
    };
    Ok(GeneratorErrors { coarse: err(coarse)?, fine: err(fine)? })
}

/// `ψ ∈ {1, x, v, x²}` with their exact images under `𝓛`.
pub fn check_generator(model: &BnsModel, coarse: &Grid, fine: &Grid, xi: f64, point: (f64, f64)) -> Result<CheckReport, SolverError> {
    let mu2 = model.jumps.moment(2)?;
    type Case = (&'static str, fn(f64, f64) -> f64);
    let cases: [Case; 4] = [("1", |_, _| 1.0), ("x", |x, _| x), ("v", |_, v| v), ("x^2", |x, _| x * x)];
    let mut worst = 0.0f64;
    let mut ok = true;
    let mut lines = Vec::new();
    for (name, psi) in cases {
        let e = generator_errors(model, coarse, fine, xi, point, psi, |c, x, v| match name {
            "1" => 0.0,
            "x" => c.x_drift(v),
            "v" => -c.lambda * (v - c.mu1),
            _ => c.exact_on_x_squared(x, v, mu2),
        })?;
        ok &= e.consistent();
        worst = worst.max(e.fine);
        lines.push(format!("{name}: {:.2e} -> {:.2e}", e.coarse, e.fine));
    }
    let mut report = CheckReport::new("generator_consistency", worst, 0.0, 0.0, 0.0, 0.0);
    report.budget_grid = worst;
    report.status = if ok { CheckStatus::Pass } else { CheckStatus::Fail };
    Ok(report.with_detail(lines.join("; ")))
}

/// `E[e^{−rT} e^{X_T}] = e^{x₀}` within three standard errors.
pub fn check_martingale(model: &BnsModel, x0: f64, v0: f64, n_paths: usize, seed: u64) -> CheckReport {
    let t = model.params.horizon;
    let disc = (-model.params.r * t).exp();
    let draws: Vec<f64> = {
        use rayon::prelude::*;
        (0..n_paths)
            .into_par_iter()
            .map(|p| disc * simulate_path(model, x0, v0, &[t], &mut path_rng(seed, p as u64)).x[0].exp())
            .collect()
    };
    let (m, se) = mean_and_stderr(&draws);
    CheckReport::new("martingale", (m - x0.exp()).abs(), 0.0, 0.0, 3.0 * se, 0.0)
        .with_detail(format!("mean {m:.6} ± {se:.2e}"))
}

/// Kernel conditions: finite cumulant domain and steepness at its edge.
pub fn check_kernel_conditions(jumps: &JumpMeasure) -> CheckReport {
    if jumps.is_null() {
        return CheckReport::skipped("kernel_conditions", "no jumps");
    }
    let rep = jumps.kernel.validate_conditions();
    let mut r = CheckReport::new("kernel_conditions", if rep.passed() { 0.0 } else { 1.0 }, 0.0, 0.0, 0.0, 0.0);
    r.detail = format!("theta_hat = {}, probes = {}", rep.theta_hat, rep.probes.len());
    r
}

/// Share of jump mass leaving the top of the grid from the probe
/// variances; a warning rather than a failure.
pub fn check_extrapolated_mass(surface: &ValueSurface, probe_v: &[f64], limit: f64) -> CheckReport {
    if surface.diagnostics.jump_mass == 0.0 {
        return CheckReport::skipped("extrapolated_mass", "no jumps");
    }
    let g = surface.grid();
    let mass = surface.extrapolated_mass();
    let worst = probe_v
        .iter()
        .map(|&v| {
            let j = g.v().partition_point(|&n| n <= v).saturating_sub(1).min(g.n_v() - 1);
            mass[j].max(mass[(j + 1).min(g.n_v() - 1)])
        })
        .fold(0.0, f64::max);
    CheckReport::new("extrapolated_mass", worst, limit, 0.0, 0.0, 0.0).as_warning()
}

/// Variance headroom `v_max ≥ v₀ + q_{0.999}(Z_{λT})`; a warning only.
pub fn check_headroom(grid: &Grid, jumps: &JumpMeasure, lambda: f64, v0: f64) -> CheckReport {
    let need = required_v_max(jumps, lambda, grid.horizon(), v0);
    let have = grid.v()[grid.n_v() - 1];
    CheckReport::new("variance_headroom", need - have, 0.0, 0.0, 0.0, 0.0)
        .with_detail(format!("v_max = {have}, needed {need:.5}"))
        .as_warning()
}

/// Everything the suite needs; grids must nest (fine = 2× coarse).
#[derive(Debug, Clone)]
pub struct SuiteSpec {
    pub model: BnsModel,
    pub payoff: Payoff,
    pub coarse: Grid,
    pub fine: Grid,
    /// `(x, v)` probes at `t = 0`.
    pub probes: Vec<(f64, f64)>,
    pub mc: McSettings,
    pub lsmc: LsmcSettings,
    pub solver: SolverOptions,
    pub comparison_eps: f64,
    pub deltas: Vec<f64>,
    pub dpp_eps: f64,
    pub dpp_paths: usize,
    pub modulus_tolerance: f64,
}

fn with_rate(model: &BnsModel, r: f64) -> Result<BnsModel, SolverError> {
    let p = model.params;
    let params = ModelParams::new(p.lambda, p.rho, r, p.horizon)?;
    Ok(BnsModel::new(params, model.jumps.clone())?)
}

/// Runs every check; reports come back sorted by name.
pub fn run_suite(spec: &SuiteSpec) -> Result<Vec<CheckReport>, VerifyError> {
    let m = &spec.model;
    let tol = spec.solver.penalty_tolerance;
    let am = SolverOptions { mode: ExerciseMode::American, ..spec.solver.clone() };
    let eu = SolverOptions { mode: ExerciseMode::European, ..spec.solver.clone() };
    let mut out = Vec::new();

    out.push(check_kernel_conditions(&m.jumps));
    let v_probe: Vec<f64> = spec.probes.iter().map(|p| p.1).collect();
    let v_top = v_probe.iter().cloned().fold(0.0, f64::max);
    out.push(check_headroom(&spec.fine, &m.jumps, m.params.lambda, v_top));
    out.push(check_martingale(m, spec.probes[0].0, spec.probes[0].1, spec.mc.n_paths, derive_seed(spec.mc.seed, 90)));

    let fine = solver::solve(&spec.fine, m, &spec.payoff, &am)?;
    let coarse = solver::solve(&spec.coarse, m, &spec.payoff, &am)?;
    out.push(check_obstacle(&fine, tol));
    out.push(check_extrapolated_mass(&fine, &v_probe, 1e-3));
    out.push(check_oracle_agreement(&fine, &coarse, m, &spec.probes, &spec.mc, &spec.lsmc)?);
    out.push(check_lipschitz_modulus(&fine, &coarse, spec.modulus_tolerance));

    let raised = solver::solve(&spec.coarse, m, &spec.payoff, &SolverOptions { boundary_shift: spec.comparison_eps, ..am.clone() })?;
    out.push(check_comparison(&raised, &coarse, spec.comparison_eps, tol)?);

    let dpp_probes: Vec<(f64, f64, usize)> = spec.probes.iter().map(|&(x, v)| (x, v, 0)).collect();
    out.push(check_dpp(&fine, m, &dpp_probes, spec.dpp_eps, spec.dpp_paths, derive_seed(spec.mc.seed, 91))?);

    // Localization ladder on the coarse grid.
    if spec.deltas.is_empty() {
        out.push(CheckReport::skipped("minimality", "no delta ladder"));
    } else {
        let inc = two_grid_increment(&fine, &coarse, |_, _| true);
        let mut prev: Option<ValueSurface> = None;
        for &d in &spec.deltas {
            let g = spec.coarse.restrict_below(d)?;
            let loc = solver::solve_localized(&g, m, &spec.payoff, &am)?;
            out.push(rename(check_minimality(&loc, &coarse, tol)?, &format!("minimality_delta_{d}")));
            out.push(rename(check_localization_agreement(&loc, &coarse, m.params.lambda, inc)?, &format!("localization_delta_{d}")));
            if let Some(p) = &prev {
                let worst = common_max(p, &loc, |_, _| true, |a, b| a - b)?;
                out.push(CheckReport::new(&format!("delta_monotone_{d}"), worst, 0.0, 0.0, 0.0, tol));
            }
            prev = Some(loc);
        }
    }

    let point = nearest_interior_node(&spec.coarse, spec.probes[0]);
    let xi = fine.diagnostics.xi;
    out.push(check_generator(m, &spec.coarse, &spec.fine, xi, point)?);

    // Zero-rate twin: no early exercise premium.
    let m0 = with_rate(m, 0.0)?;
    let a0 = solver::solve(&spec.coarse, &m0, &spec.payoff, &am)?;
    let e0 = solver::solve(&spec.coarse, &m0, &spec.payoff, &eu)?;
    let coarser = halve(&spec.coarse)?;
    let e0c = solver::solve(&coarser, &m0, &spec.payoff, &eu)?;
    out.push(check_no_early_exercise(&a0, &e0, &e0c, &spec.probes, tol)?);

    out.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}

/// Interior node of `g` closest to `p`, coordinate by coordinate.
pub fn nearest_interior_node(g: &Grid, p: (f64, f64)) -> (f64, f64) {
    let pick = |nodes: &[f64], t: f64| {
        let inner = &nodes[1..nodes.len() - 1];
        inner.iter().cloned().min_by(|a, b| (a - t).abs().total_cmp(&(b - t).abs())).unwrap_or(t)
    };
    (pick(g.x(), p.0), pick(g.v(), p.1))
}

fn rename(mut r: CheckReport, name: &str) -> CheckReport {
    r.name = name.to_string();
    r
}

/// Every other node in `x` and `v`, half the steps; needs odd node counts
/// and an even step count.
pub fn halve(g: &Grid) -> Result<Grid, SolverError> {
    if g.n_x() % 2 == 0 || g.n_v() % 2 == 0 || g.n_t() % 2 != 0 {
        return Err(SolverError::InvalidGrid("halving needs odd node counts and an even step count".into()));
    }
    let x = g.x().iter().step_by(2).cloned().collect();
    let v = g.v().iter().step_by(2).cloned().collect();
    Grid::from_nodes(x, v, g.n_t() / 2, g.horizon())
}

/// Columns `check, status, measured, bound, budget_grid, budget_stat`.
pub fn write_summary_csv<W: Write>(reports: &[CheckReport], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["check", "status", "measured", "bound", "budget_grid", "budget_stat"])?;
    for r in reports {
        w.write_record(&[
            r.name.clone(),
            r.status.as_str().to_string(),
            r.measured.to_string(),
            r.bound.to_string(),
            r.budget_grid.to_string(),
            r.budget_stat.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_pass_rule() {
        assert_eq!(CheckReport::new("a", 1.0, 0.5, 0.25, 0.25, 0.1).status, CheckStatus::Pass);
        assert_eq!(CheckReport::new("a", 1.0, 0.5, 0.2, 0.2, 0.0).status, CheckStatus::Fail);
        assert_eq!(CheckReport::new("a", 1.0, 0.5, 0.0, 0.0, 0.0).as_warning().status, CheckStatus::Warn);
        assert!(CheckReport::skipped("a", "b").passed());
    }

    #[test]
    fn summary_csv_columns() {
        let mut buf = Vec::new();
        write_summary_csv(&[CheckReport::new("x", 0.1, 1.0, 0.0, 0.0, 0.0)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("check,status,measured,bound,budget_grid,budget_stat\nx,pass,0.1,1,0,0"));
    }

    #[test]
    fn halving_keeps_nodes() {
        let g = Grid::uniform(-1.0, 1.0, 21, 0.0, 0.2, 11, 10, 1.0).unwrap();
        let h = halve(&g).unwrap();
        assert_eq!(h.n_x(), 11);
        assert_eq!(h.n_v(), 6);
        assert_eq!(h.n_t(), 5);
        assert!(halve(&h).is_err());
    }
}
