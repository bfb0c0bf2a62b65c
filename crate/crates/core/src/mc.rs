//! Monte Carlo prices on exact paths: European by discounted expectation,
//! American by least-squares regression over exercise dates.
//!
//! Path `p` always draws from the stream `(seed, p)`, so estimates do not
//! depend on the number of worker threads. The American price comes from
//! re-simulating with the frozen stopping rule on the base seed, while the
//! regression uses paths from a derived seed.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::analytic::bns_european_put;
use crate::dynamics::{simulate_path, BnsModel};
use crate::error::McError;
use crate::payoff::Payoff;
use crate::rng::{derive_seed, path_rng};
use crate::solver::ValueSurface;
use crate::stats::{covariance, mean_and_stderr, pairwise_sum};

const TRAINING_TAG: u64 = 0x7472_6169_6e00;
const CHUNK: usize = 4096;
/// Ridge shift, relative to the unit diagonal of the scaled normal equations.
pub const RIDGE_SHIFT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub n_exercise_dates: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings {
    pub n_paths: usize,
    pub seed: u64,
    /// Control variates: the discounted stock at the exercise time and, for
    /// American puts, the discounted European put priced by transform.
    pub control_variate: bool,
}

impl McSettings {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self { n_paths, seed, control_variate: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisSpec {
    /// `{1, X, X², V, XV, h(X)}`.
    Standard,
    /// Standard plus `{X³, V², X²V, h(X)V, h(X)²}`.
    Extended,
}

impl BasisSpec {
    pub fn len(self) -> usize {
        match self {
            BasisSpec::Standard => 6,
            BasisSpec::Extended => 11,
        }
    }

    pub fn is_empty(self) -> bool {
        false
    }

    fn eval(self, x: f64, v: f64, h: f64, out: &mut [f64]) {
        out[0] = 1.0;
        out[1] = x;
        out[2] = x * x;
        out[3] = v;
        out[4] = x * v;
        out[5] = h;
        if self == BasisSpec::Extended {
            out[6] = x * x * x;
            out[7] = v * v;
            out[8] = x * x * v;
            out[9] = h * v;
            out[10] = h * h;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsmcSettings {
    pub n_dates: usize,
    pub basis: BasisSpec,
    /// Regress on in-the-money paths only.
    pub itm_only: bool,
    /// Regression paths; defaults to the pricing path count.
    pub n_train: Option<usize>,
}

impl Default for LsmcSettings {
    fn default() -> Self {
        Self { n_dates: 50, basis: BasisSpec::Standard, itm_only: true, n_train: None }
    }
}

/// Continuation regressions per exercise date `t_k = kT/n`, `k = 1..n`.
/// `None` marks dates without a fit (too few in-the-money paths) and the
/// final date; the rule never exercises there before `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingRule {
    pub dates: Vec<f64>,
    pub basis: BasisSpec,
    /// Log-price centre used in the basis.
    pub x_center: f64,
    pub coefficients: Vec<Option<Vec<f64>>>,
}

impl StoppingRule {
    pub fn continuation(&self, k: usize, x: f64, v: f64, h: f64) -> Option<f64> {
        let beta = self.coefficients[k].as_ref()?;
        let mut phi = [0.0; 11];
        self.basis.eval(x - self.x_center, v, h, &mut phi);
        Some(beta.iter().zip(&phi).map(|(b, p)| b * p).sum())
    }

    /// Exercise at date index `k < n − 1` when the payoff is positive and
    /// beats the fitted continuation value.
    pub fn exercise(&self, k: usize, x: f64, v: f64, h: f64) -> bool {
        h > 0.0 && self.continuation(k, x, v, h).is_some_and(|c| h > c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmericanResult {
    /// Re-simulated price with the frozen rule.
    pub estimate: McEstimate,
    /// In-sample value on the regression paths, `max(h, Ĉ)` recursion.
    pub in_sample: McEstimate,
    /// European price on the regression paths.
    pub european_in_sample: McEstimate,
    pub rule: StoppingRule,
}

fn check_common(n_paths: usize, x0: f64, v0: f64) -> Result<(), McError> {
    if n_paths < 2 {
        return Err(McError::InvalidInput("need at least 2 paths".into()));
    }
    if !x0.is_finite() || !(v0.is_finite() && v0 >= 0.0) {
        return Err(McError::InvalidInput("x0 must be finite and v0 >= 0".into()));
    }
    Ok(())
}

/// Mean and standard error after regressing out controls of known mean.
/// Controls without variance are dropped.
pub fn estimate(samples: &[f64], controls: &[(&[f64], f64)]) -> (f64, f64) {
    let live: Vec<&(&[f64], f64)> = controls.iter().filter(|(c, _)| covariance(c, c) > 0.0).collect();
    if live.is_empty() {
        return mean_and_stderr(samples);
    }
    let k = live.len();
    let cc = DMatrix::from_fn(k, k, |a, b| covariance(live[a].0, live[b].0));
    let cy = DVector::from_fn(k, |a, _| covariance(live[a].0, samples));
    let Some(beta) = cc.cholesky().map(|ch| ch.solve(&cy)) else {
        return mean_and_stderr(samples);
    };
    let adj: Vec<f64> = (0..samples.len())
        .map(|i| samples[i] - live.iter().zip(beta.iter()).map(|((c, m), b)| b * (c[i] - m)).sum::<f64>())
        .collect();
    mean_and_stderr(&adj)
}

/// `E[e^{−rT} h(X_T)]`.
pub fn price_european(model: &BnsModel, payoff: &Payoff, x0: f64, v0: f64, mc: &McSettings) -> Result<McEstimate, McError> {
    check_common(mc.n_paths, x0, v0)?;
    let t = model.params.horizon;
    let disc = (-model.params.r * t).exp();
    let draws: Vec<(f64, f64)> = (0..mc.n_paths)
        .into_par_iter()
        .map(|p| {
            let path = simulate_path(model, x0, v0, &[t], &mut path_rng(mc.seed, p as u64));
            let x = path.x[0];
            (disc * payoff.evaluate(x), disc * x.exp())
        })
        .collect();
    let (y, c): (Vec<f64>, Vec<f64>) = draws.into_iter().unzip();
    let controls = [(c.as_slice(), x0.exp())];
    let (value, std_error) = estimate(&y, if mc.control_variate { &controls } else { &[] });
    Ok(McEstimate { value, std_error, n_paths: mc.n_paths, n_exercise_dates: None })
}

/// Least-squares Monte Carlo with an independent pricing pass.
pub fn price_american(
    model: &BnsModel,
    payoff: &Payoff,
    x0: f64,
    v0: f64,
    mc: &McSettings,
    ls: &LsmcSettings,
) -> Result<AmericanResult, McError> {
    check_common(mc.n_paths, x0, v0)?;
    if ls.n_dates < 1 {
        return Err(McError::InvalidInput("need at least one exercise date".into()));
    }
    let n = ls.n_dates;
    let horizon = model.params.horizon;
    let r = model.params.r;
    let dates: Vec<f64> = (1..=n).map(|k| if k == n { horizon } else { horizon * k as f64 / n as f64 }).collect();
    let n_train = ls.n_train.unwrap_or(mc.n_paths);
    if n_train < 2 {
        return Err(McError::InvalidInput("need at least 2 regression paths".into()));
    }

    // Regression paths, stored date-major.
    let train_seed = derive_seed(mc.seed, TRAINING_TAG);
    let mut xs = vec![0.0; n_train * n];
    let mut vs = vec![0.0; n_train * n];
    let paths: Vec<(Vec<f64>, Vec<f64>)> = (0..n_train)
        .into_par_iter()
        .map(|p| {
            let s = simulate_path(model, x0, v0, &dates, &mut path_rng(train_seed, p as u64));
            (s.x, s.v)
        })
        .collect();
    for (p, (px, pv)) in paths.into_iter().enumerate() {
        for k in 0..n {
            xs[k * n_train + p] = px[k];
            vs[k * n_train + p] = pv[k];
        }
    }

    // Backward induction. `ls_val` is the realized cash flow under the rule,
    // `tvr_val` the max(h, Ĉ) recursion; both are valued at the current date.
    let last = (n - 1) * n_train;
    let mut ls_val: Vec<f64> = (0..n_train).map(|p| payoff.evaluate(xs[last + p])).collect();
    let mut tvr_val = ls_val.clone();
    let european_terminal = ls_val.clone();
    let mut coefficients: Vec<Option<Vec<f64>>> = vec![None; n];
    let dim = ls.basis.len();
    let step_disc = |k: usize| (-r * (dates[k + 1] - dates[k])).exp();
    for k in (0..n - 1).rev() {
        let d = step_disc(k);
        ls_val.iter_mut().for_each(|y| *y *= d);
        tvr_val.iter_mut().for_each(|y| *y *= d);
        let row = k * n_train;
        let h: Vec<f64> = (0..n_train).map(|p| payoff.evaluate(xs[row + p])).collect();
        let chosen: Vec<usize> = (0..n_train).filter(|&p| !ls.itm_only || h[p] > 0.0).collect();
        if chosen.len() <= dim {
            continue;
        }
        let beta = regress(ls.basis, x0, &xs[row..row + n_train], &vs[row..row + n_train], &h, &chosen, &[&ls_val, &tvr_val], k)?;
        let mut phi = [0.0; 11];
        for &p in &chosen {
            ls.basis.eval(xs[row + p] - x0, vs[row + p], h[p], &mut phi);
            let c_ls: f64 = beta[0].iter().zip(&phi).map(|(b, f)| b * f).sum();
            let c_tvr: f64 = beta[1].iter().zip(&phi).map(|(b, f)| b * f).sum();
            if h[p] > 0.0 && h[p] > c_ls {
                ls_val[p] = h[p];
            }
            tvr_val[p] = h[p].max(c_tvr);
        }
        coefficients[k] = Some(beta[0].clone());
    }
    let d0 = (-r * dates[0]).exp();
    let scale = |v: &[f64]| -> Vec<f64> { v.iter().map(|y| y * d0).collect() };
    let (ins, ins_se) = mean_and_stderr(&scale(&tvr_val));
    let disc_t = (-r * horizon).exp();
    let eur: Vec<f64> = european_terminal.iter().map(|y| y * disc_t).collect();
    let (eu, eu_se) = mean_and_stderr(&eur);
    drop(xs);
    drop(vs);

    let rule = StoppingRule { dates: dates.clone(), basis: ls.basis, x_center: x0, coefficients };
    let estimate = apply_rule(model, payoff, x0, v0, mc, &rule)?;
    Ok(AmericanResult {
        estimate,
        in_sample: McEstimate { value: ins, std_error: ins_se, n_paths: n_train, n_exercise_dates: Some(n) },
        european_in_sample: McEstimate { value: eu, std_error: eu_se, n_paths: n_train, n_exercise_dates: None },
        rule,
    })
}

/// Prices the frozen rule on fresh paths from `mc.seed`.
pub fn apply_rule(
    model: &BnsModel,
    payoff: &Payoff,
    x0: f64,
    v0: f64,
    mc: &McSettings,
    rule: &StoppingRule,
) -> Result<McEstimate, McError> {
    check_common(mc.n_paths, x0, v0)?;
    let r = model.params.r;
    let n = rule.dates.len();
    let t = rule.dates[n - 1];
    let draws: Vec<[f64; 3]> = (0..mc.n_paths)
        .into_par_iter()
        .map(|p| {
            let s = simulate_path(model, x0, v0, &rule.dates, &mut path_rng(mc.seed, p as u64));
            let mut stop = n - 1;
            for k in 0..n - 1 {
                if rule.exercise(k, s.x[k], s.v[k], payoff.evaluate(s.x[k])) {
                    stop = k;
                    break;
                }
            }
            let disc = (-r * rule.dates[stop]).exp();
            let european = (-r * t).exp() * payoff.evaluate(s.x[n - 1]);
            [disc * payoff.evaluate(s.x[stop]), disc * s.x[stop].exp(), european]
        })
        .collect();
    let column = |q: usize| -> Vec<f64> { draws.iter().map(|d| d[q]).collect() };
    let (y, stock, european) = (column(0), column(1), column(2));
    let mut controls: Vec<(&[f64], f64)> = Vec::new();
    if mc.control_variate {
        controls.push((&stock, x0.exp()));
        if let Some(k) = payoff.strike().filter(|_| payoff.is_put() && v0 > 0.0) {
            controls.push((&european, bns_european_put(model, x0, v0, k)?));
        }
    }
    let (value, std_error) = estimate(&y, &controls);
    Ok(McEstimate { value, std_error, n_paths: mc.n_paths, n_exercise_dates: Some(n) })
}

/// Solves the normal equations for each target on the chosen paths.
#[allow(clippy::too_many_arguments)]
fn regress(
    basis: BasisSpec,
    x_center: f64,
    xs: &[f64],
    vs: &[f64],
    h: &[f64],
    chosen: &[usize],
    targets: &[&[f64]],
    date: usize,
) -> Result<Vec<Vec<f64>>, McError> {
    let dim = basis.len();
    let nt = targets.len();
    // Fixed-size chunks summed in order keep the result independent of threads.
    let partials: Vec<(Vec<f64>, Vec<f64>)> = chosen
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; dim * dim];
            let mut b = vec![0.0; dim * nt];
            let mut phi = [0.0; 11];
            for &p in chunk {
                basis.eval(xs[p] - x_center, vs[p], h[p], &mut phi);
                for a in 0..dim {
                    for c in a..dim {
                        g[a * dim + c] += phi[a] * phi[c];
                    }
                    for (t, y) in targets.iter().enumerate() {
                        b[t * dim + a] += phi[a] * y[p];
                    }
                }
            }
            (g, b)
        })
        .collect();
    let mut g = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = vec![DVector::<f64>::zeros(dim); nt];
    for (pg, pb) in &partials {
        for a in 0..dim {
            for c in a..dim {
                g[(a, c)] += pg[a * dim + c];
            }
            for t in 0..nt {
                rhs[t][a] += pb[t * dim + a];
            }
        }
    }
    for a in 0..dim {
        for c in 0..a {
            g[(a, c)] = g[(c, a)];
        }
    }
    // Scale to unit diagonal before factoring.
    let s: Vec<f64> = (0..dim).map(|a| if g[(a, a)] > 0.0 { 1.0 / g[(a, a)].sqrt() } else { 1.0 }).collect();
    let mut gs = g.clone();
    for a in 0..dim {
        for c in 0..dim {
            gs[(a, c)] *= s[a] * s[c];
        }
    }
    let chol = gs.clone().cholesky().or_else(|| {
        let mut shifted = gs.clone();
        for a in 0..dim {
            shifted[(a, a)] += RIDGE_SHIFT;
        }
        shifted.cholesky()
    });
    let chol = chol.ok_or(McError::Regression { date })?;
    Ok(rhs
        .into_iter()
        .map(|b| {
            let bs = DVector::from_iterator(dim, (0..dim).map(|a| b[a] * s[a]));
            let y = chol.solve(&bs);
            (0..dim).map(|a| y[a] * s[a]).collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DppResult {
    /// `E[e^{−r(τ−t)} u(X_τ, V_τ, τ)] − u(x₀, v₀, t)`.
    pub residual: f64,
    pub std_error: f64,
    pub n_paths: usize,
    /// Paths that visited points outside the surface grid.
    pub out_of_range: usize,
    pub mean_stopping_time: f64,
}

/// Dynamic-programming residual of a solved surface at level `level`:
/// paths stop at the first surface time level where `u − h ≤ eps`.
#[allow(clippy::too_many_arguments)]
pub fn check_dpp(
    surface: &ValueSurface,
    model: &BnsModel,
    x0: f64,
    v0: f64,
    level: usize,
    eps: f64,
    n_paths: usize,
    seed: u64,
) -> Result<DppResult, McError> {
    check_common(n_paths, x0, v0)?;
    let g = surface.grid();
    if level > g.n_t() {
        return Err(McError::InvalidInput(format!("time level {level} beyond {}", g.n_t())));
    }
    let (u0, out0) = surface.interpolate_extended(x0, v0, level);
    if out0 {
        return Err(McError::InvalidInput("start point lies outside the surface grid".into()));
    }
    let payoff = surface.payoff();
    let t0 = g.time(level);
    if u0 - payoff.evaluate(x0) <= eps || level == g.n_t() {
        return Ok(DppResult { residual: 0.0, std_error: 0.0, n_paths, out_of_range: 0, mean_stopping_time: 0.0 });
    }
    let times: Vec<f64> = (level + 1..=g.n_t()).map(|n| g.time(n) - t0).collect();
    let r = model.params.r;
    let draws: Vec<(f64, bool, f64)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let s = simulate_path(model, x0, v0, &times, &mut path_rng(seed, p as u64));
            let mut outside = false;
            for (q, &tau) in times.iter().enumerate() {
                let n = level + 1 + q;
                let (u, out) = surface.interpolate_extended(s.x[q], s.v[q], n);
                outside |= out;
                if u - payoff.evaluate(s.x[q]) <= eps || n == g.n_t() {
                    return ((-r * tau).exp() * u, outside, tau);
                }
            }
            unreachable!("the last level always stops")
        })
        .collect();
    let vals: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let taus: Vec<f64> = draws.iter().map(|d| d.2).collect();
    let (mean, se) = mean_and_stderr(&vals);
    Ok(DppResult {
        residual: mean - u0,
        std_error: se,
        n_paths,
        out_of_range: draws.iter().filter(|d| d.1).count(),
        mean_stopping_time: pairwise_sum(&taus) / n_paths as f64,
    })
}
