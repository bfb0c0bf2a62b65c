//! Backward time-march for the obstacle problem
//! `max(u_t + 𝓛u − ru, h − u) = 0`, `u(·,·,T) = h`.
//!
//! One step from `t_{n+1}` to `t_n`:
//!
//! 1. transport along the variance characteristics
//!    `v ↦ m + (v − m)e^{−λΔt}`, where `m` is the jump mean not carried by
//!    the quadrature nodes, by semi-Lagrangian interpolation in `v`;
//! 2. explicit jump gain `λ Σ w_k u(x + ρz_k, v + z_k)` plus the explicit
//!    mixed and `vv` small-jump Taylor terms;
//! 3. implicit Euler in `x` per variance slice for diffusion, drift,
//!    discounting and jump loss `λ Σ w_k`;
//! 4. obstacle enforcement by penalty iteration or projected SOR.
//!
//! The `½ρ²m₂^ξ ψ_xx` part of the small-jump correction joins the implicit
//! diffusion.

use rayon::prelude::*;

use crate::dynamics::BnsModel;
use crate::error::SolverError;
use crate::payoff::Payoff;
use crate::solver::generator::{bilinear, locate, AxisStencil, GeneratorCoeffs};
use crate::solver::grid::Grid;
use crate::solver::jumps::{JumpQuadrature, DEFAULT_TAIL_TOL};
use crate::solver::surface::{SolveDiagnostics, ValueSurface};
use crate::solver::tridiag;

/// Default small-jump cutoff for infinite-activity kernels.
pub const DEFAULT_XI: f64 = 1e-3;
pub const DEFAULT_PENALTY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExerciseMode {
    American,
    European,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObstacleMethod {
    /// Penalty iteration with `ρ_pen`; `None` uses `1e6·max(1, r)`.
    Penalty { rho_pen: Option<f64>, max_iterations: usize },
    Psor { omega: f64, tol: f64, max_sweeps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VInterp {
    /// Linear interpolation at the foot: first-order upwinding, monotone.
    Linear,
    /// Cubic Lagrange, limited to the range of the bracketing nodes. More
    /// accurate on coarse variance grids but not monotone, so discrete
    /// comparison and minimality can fail by the interpolation error.
    Cubic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub mode: ExerciseMode,
    pub obstacle: ObstacleMethod,
    /// Small-jump cutoff `ξ`; `None` picks 0 for finite-activity kernels and
    /// [`DEFAULT_XI`] otherwise.
    pub xi: Option<f64>,
    pub tail_tol: f64,
    pub penalty_tolerance: f64,
    /// Bound on `Δt·λ·(explicit jump mass + explicit Taylor terms)`.
    pub stability_limit: f64,
    pub v_interp: VInterp,
    /// Added to the terminal, variance-edge and log-price boundary data.
    pub boundary_shift: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            mode: ExerciseMode::American,
            obstacle: ObstacleMethod::Penalty { rho_pen: None, max_iterations: 100 },
            xi: None,
            tail_tol: DEFAULT_TAIL_TOL,
            penalty_tolerance: DEFAULT_PENALTY_TOLERANCE,
            stability_limit: 1.0,
            v_interp: VInterp::Linear,
            boundary_shift: 0.0,
        }
    }
}

impl SolverOptions {
    pub fn european() -> Self {
        Self { mode: ExerciseMode::European, ..Self::default() }
    }
}

/// Solves on the full grid. In American mode the lowest variance slice is
/// clamped to `h`; in European mode the equation is solved there too.
pub fn solve(grid: &Grid, model: &BnsModel, payoff: &Payoff, opts: &SolverOptions) -> Result<ValueSurface, SolverError> {
    let clamp = opts.mode == ExerciseMode::American;
    march(grid, model, payoff, opts, clamp)
}

/// Solves on `v ≥ δ = grid.delta() > 0` with `u = h` at `v = δ`; variance
/// characteristics that cross below `δ` are stopped there.
pub fn solve_localized(
    grid: &Grid,
    model: &BnsModel,
    payoff: &Payoff,
    opts: &SolverOptions,
) -> Result<ValueSurface, SolverError> {
    if !(grid.delta() > 0.0) {
        return Err(SolverError::InvalidGrid("localized solve needs a lower variance edge delta > 0".into()));
    }
    march(grid, model, payoff, opts, true)
}

/// Semi-Lagrangian stencil for one variance slice.
#[derive(Debug, Clone)]
struct Foot {
    /// Foot below the lowest node.
    below: bool,
    nodes: [usize; 4],
    weights: [f64; 4],
    used: usize,
    bracket: (usize, usize),
}

fn foot_stencil(v: &[f64], f: f64, interp: VInterp) -> Foot {
    let n = v.len();
    let below = f < v[0] - 1e-14 * v[n - 1].max(1.0);
    let s = locate(v, f.max(v[0]));
    let k = s.cell;
    let mut foot = Foot { below, nodes: [0; 4], weights: [0.0; 4], used: 2, bracket: (k, k + 1) };
    match interp {
        VInterp::Linear => {
            foot.nodes[..2].copy_from_slice(&[k, k + 1]);
            foot.weights[..2].copy_from_slice(&[1.0 - s.frac, s.frac]);
        }
        VInterp::Cubic => {
            let start = k.saturating_sub(1).min(n - 4);
            let z: Vec<f64> = (start..start + 4).map(|q| v[q]).collect();
            let fx = f.max(v[0]);
            for a in 0..4 {
                let mut w = 1.0;
                for b in 0..4 {
                    if a != b {
                        w *= (fx - z[b]) / (z[a] - z[b]);
                    }
                }
                foot.nodes[a] = start + a;
                foot.weights[a] = w;
            }
            foot.used = 4;
        }
    }
    foot
}

struct SliceCoeffs {
    lower: f64,
    diag: f64,
    upper: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct SliceStats {
    iterations: usize,
    violation: f64,
    failed: Option<(usize, f64)>,
}

fn march(grid: &Grid, model: &BnsModel, payoff: &Payoff, opts: &SolverOptions, clamp: bool) -> Result<ValueSurface, SolverError> {
    let p = model.params;
    if (grid.horizon() - p.horizon).abs() > 1e-12 * p.horizon {
        return Err(SolverError::InvalidGrid(format!(
            "grid horizon {} differs from model horizon {}",
            grid.horizon(),
            p.horizon
        )));
    }
    let (n_x, n_v, n_t) = (grid.n_x(), grid.n_v(), grid.n_t());
    let (xs, vs) = (grid.x(), grid.v());
    let (dx, dt) = (grid.dx(), grid.dt());
    let lambda = p.lambda;
    let rho = p.rho;

    let xi = opts.xi.unwrap_or(if model.kernel().finite_activity() { 0.0 } else { DEFAULT_XI });
    let min_dv = vs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let mean_dv = (vs[n_v - 1] - vs[0]) / (n_v - 1) as f64;
    let quad = JumpQuadrature::build(&model.jumps, xi, mean_dv, opts.tail_tol)?;
    let coeffs = GeneratorCoeffs::new(model, quad)?;
    let quad = &coeffs.quad;
    let m = quad.residual_mean();
    let mass = quad.total_mass();
    let m2s = quad.small_m2;

    let stability = dt * lambda * (mass + m2s * (rho.abs() / (dx * min_dv) + 1.0 / (min_dv * min_dv)));
    if stability > opts.stability_limit {
        return Err(SolverError::Stability { measured: stability, limit: opts.stability_limit });
    }

    let rho_pen = match opts.obstacle {
        ObstacleMethod::Penalty { rho_pen, .. } => rho_pen.unwrap_or(1e6 * p.r.max(1.0)),
        ObstacleMethod::Psor { .. } => 0.0,
    };
    let american = opts.mode == ExerciseMode::American;
    let shift = opts.boundary_shift;
    let h: Vec<f64> = xs.iter().map(|&x| payoff.evaluate(x)).collect();

    // Per-slice implicit coefficients.
    let c0 = 1.0 + dt * (p.r + lambda * mass);
    let slices: Vec<SliceCoeffs> = vs
        .iter()
        .map(|&v| {
            let a = p.r - 0.5 * v - lambda * coeffs.kappa_rho + lambda * rho * m;
            let d = 0.5 * (v + lambda * rho * rho * m2s);
            let diff = d / (dx * dx);
            let (al, be, ga) = if diff >= a.abs() / (2.0 * dx) {
                (diff - a / (2.0 * dx), -2.0 * diff, diff + a / (2.0 * dx))
            } else if a > 0.0 {
                (diff, -a / dx - 2.0 * diff, a / dx + diff)
            } else {
                (diff - a / dx, a / dx - 2.0 * diff, diff)
            };
            SliceCoeffs { lower: -dt * al, diag: c0 - dt * be, upper: -dt * ga }
        })
        .collect();

    let decay = (-lambda * dt).exp();
    let feet: Vec<Foot> = vs.iter().map(|&v| foot_stencil(vs, m + (v - m) * decay, opts.v_interp)).collect();

    // Jump targets: fractional x offset per node, variance stencil per (slice, node).
    let x_off: Vec<f64> = quad.nodes.iter().map(|&z| rho * z / dx).collect();
    let v_max = vs[n_v - 1];
    let v_stencils: Vec<Vec<AxisStencil>> =
        vs.iter().map(|&v| quad.nodes.iter().map(|&z| locate(vs, v + z)).collect()).collect();
    let extrapolated_mass: Vec<f64> = vs
        .iter()
        .map(|&v| {
            if mass == 0.0 {
                return 0.0;
            }
            let off: f64 = quad
                .nodes
                .iter()
                .zip(&quad.weights)
                .filter(|(z, _)| v + **z > v_max * (1.0 + 1e-12))
                .map(|(_, w)| w)
                .sum();
            off / mass
        })
        .collect();

    let mut levels: Vec<Vec<f64>> = vec![Vec::new(); n_t + 1];
    let mut masks: Vec<Vec<bool>> = vec![Vec::new(); n_t + 1];
    let terminal: Vec<f64> = (0..n_v).flat_map(|_| h.iter().map(|&hv| hv + shift)).collect();
    levels[n_t] = terminal;
    masks[n_t] = (0..n_v).flat_map(|_| h.iter().map(|&hv| hv > 0.0)).collect();

    let mut max_iterations = 0usize;
    let mut max_violation = 0.0f64;
    for n in (0..n_t).rev() {
        let tau = grid.horizon() - grid.time(n);
        let edge = |x: f64| {
            if american {
                payoff.evaluate(x) + shift
            } else {
                (-p.r * tau).exp() * payoff.evaluate(x + p.r * tau) + shift
            }
        };
        let (left, right) = (edge(xs[0]), edge(xs[n_x - 1]));
        let prev = &levels[n + 1];
        let prev_mask = &masks[n + 1];
        let mut next = vec![0.0; n_x * n_v];
        let mut mask = vec![false; n_x * n_v];

        let stats: Vec<SliceStats> = next
            .par_chunks_mut(n_x)
            .zip(mask.par_chunks_mut(n_x))
            .enumerate()
            .map(|(j, (row, mrow))| {
                if clamp && j == 0 {
                    for i in 0..n_x {
                        row[i] = h[i] + shift;
                        mrow[i] = true;
                    }
                    return SliceStats::default();
                }
                let mut rhs = vec![0.0; n_x];

                // 1. transport
                let foot = &feet[j];
                for i in 0..n_x {
                    rhs[i] = if foot.below && clamp {
                        h[i] + shift
                    } else if foot.below {
                        // Unclamped edge above zero: extend linearly.
                        let s = &foot;
                        let (a, b) = s.bracket;
                        let f = m + (vs[j] - m) * decay;
                        let t = (f - vs[a]) / (vs[b] - vs[a]);
                        prev[a * n_x + i] + t * (prev[b * n_x + i] - prev[a * n_x + i])
                    } else {
                        let mut val = 0.0;
                        for q in 0..foot.used {
                            val += foot.weights[q] * prev[foot.nodes[q] * n_x + i];
                        }
                        if foot.used == 4 {
                            let (a, b) = foot.bracket;
                            let (ua, ub) = (prev[a * n_x + i], prev[b * n_x + i]);
                            val = val.clamp(ua.min(ub), ua.max(ub));
                        }
                        val
                    };
                }

                // 2. explicit jump gain and mixed Taylor terms
                if mass > 0.0 {
                    let stencils = &v_stencils[j];
                    let scale = dt * lambda;
                    for (k, &w) in quad.weights.iter().enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        let sv = stencils[k];
                        let r0 = &prev[sv.cell * n_x..(sv.cell + 1) * n_x];
                        let r1 = &prev[(sv.cell + 1) * n_x..(sv.cell + 2) * n_x];
                        let (b0, b1) = (scale * w * (1.0 - sv.frac), scale * w * sv.frac);
                        let d = x_off[k].floor();
                        let fx = x_off[k] - d;
                        let d = d as isize;
                        // Cells fully inside the grid: i + d ∈ [0, n_x − 2].
                        let lo = (-d).max(0) as usize;
                        let hi = ((n_x as isize - 2 - d).min(n_x as isize - 1)).max(-1);
                        for i in 0..n_x {
                            if i >= lo && (i as isize) <= hi {
                                let c = (i as isize + d) as usize;
                                let v0 = r0[c] + fx * (r0[c + 1] - r0[c]);
                                let v1 = r1[c] + fx * (r1[c + 1] - r1[c]);
                                rhs[i] += b0 * v0 + b1 * v1;
                            } else {
                                let q = i as f64 + x_off[k];
                                let cell = (q.floor().max(0.0) as usize).min(n_x - 2);
                                let sx = AxisStencil { cell, frac: q - cell as f64 };
                                rhs[i] += scale * w * bilinear(prev, n_x, sx, sv);
                            }
                        }
                    }
                }
                if m2s > 0.0 && j > 0 && j + 1 < n_v {
                    let (hm, hp) = (vs[j] - vs[j - 1], vs[j + 1] - vs[j]);
                    for i in 1..n_x - 1 {
                        let u = |ii: usize, jj: usize| prev[jj * n_x + ii];
                        let uvv = 2.0 * (hm * u(i, j + 1) - (hm + hp) * u(i, j) + hp * u(i, j - 1))
                            / (hm * hp * (hm + hp));
                        let uxv = (u(i + 1, j + 1) - u(i - 1, j + 1) - u(i + 1, j - 1) + u(i - 1, j - 1))
                            / (2.0 * dx * (hm + hp));
                        rhs[i] += dt * lambda * m2s * (rho * uxv + 0.5 * uvv);
                    }
                }

                // 3–4. implicit x-solve with the obstacle
                let c = &slices[j];
                row[0] = left;
                row[n_x - 1] = right;
                let inner = n_x - 2;
                let mut b = rhs[1..n_x - 1].to_vec();
                b[0] -= c.lower * left;
                b[inner - 1] -= c.upper * right;
                let floor = &h[1..n_x - 1];
                let mut out = vec![0.0; inner];
                let mut work = Vec::new();
                let mut stats = SliceStats::default();
                if !american {
                    tridiag::solve_shifted(c.lower, c.diag, c.upper, &vec![0.0; inner], &b, &mut out, &mut work);
                } else {
                    match opts.obstacle {
                        ObstacleMethod::Penalty { max_iterations, .. } => {
                            let mut active: Vec<bool> = (1..n_x - 1).map(|i| prev_mask[j * n_x + i]).collect();
                            let mut extra = vec![0.0; inner];
                            let mut rp = vec![0.0; inner];
                            let mut last = vec![0.0; inner];
                            let mut converged = false;
                            for it in 1..=max_iterations {
                                for i in 0..inner {
                                    extra[i] = if active[i] { rho_pen } else { 0.0 };
                                    rp[i] = b[i] + extra[i] * floor[i];
                                }
                                last.copy_from_slice(&out);
                                tridiag::solve_shifted(c.lower, c.diag, c.upper, &extra, &rp, &mut out, &mut work);
                                // Nodes sitting on the obstacle can flip without moving the solution.
                                let step = out
                                    .iter()
                                    .zip(&last)
                                    .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
                                    .fold(0.0, f64::max);
                                let mut changed = false;
                                for i in 0..inner {
                                    let now = out[i] < floor[i];
                                    if now != active[i] {
                                        changed = true;
                                        active[i] = now;
                                    }
                                }
                                stats.iterations = it;
                                if !changed || (it > 1 && step <= 1.0 / rho_pen) {
                                    converged = true;
                                    break;
                                }
                            }
                            if !converged {
                                stats.failed = Some((max_iterations, f64::NAN));
                            }
                            for i in 0..inner {
                                mrow[i + 1] = active[i];
                            }
                        }
                        ObstacleMethod::Psor { omega, tol, max_sweeps } => {
                            for i in 0..inner {
                                out[i] = prev[j * n_x + i + 1].max(floor[i]);
                            }
                            let (sweeps, change, ok) =
                                tridiag::psor(c.lower, c.diag, c.upper, &b, floor, &mut out, omega, tol, max_sweeps);
                            stats.iterations = sweeps;
                            if !ok {
                                stats.failed = Some((sweeps, change));
                            }
                            for i in 0..inner {
                                mrow[i + 1] = out[i] <= floor[i];
                            }
                        }
                    }
                    mrow[0] = true;
                    mrow[n_x - 1] = h[n_x - 1] > 0.0;
                }
                row[1..n_x - 1].copy_from_slice(&out);
                if american {
                    stats.violation = (0..n_x).map(|i| h[i] - row[i]).fold(0.0, f64::max);
                }
                stats
            })
            .collect();

        for s in &stats {
            if let Some((sweeps, residual)) = s.failed {
                return Err(SolverError::NonConvergence { sweeps, residual });
            }
            max_iterations = max_iterations.max(s.iterations);
            max_violation = max_violation.max(s.violation);
        }
        if max_violation > opts.penalty_tolerance {
            return Err(SolverError::PenaltyViolation { violation: max_violation, tolerance: opts.penalty_tolerance });
        }
        levels[n] = next;
        masks[n] = mask;
    }

    let diagnostics = SolveDiagnostics {
        xi,
        quadrature_nodes: quad.nodes.len(),
        jump_mass: mass,
        residual_mean: m,
        tail_mass: quad.tail_mass,
        stability,
        max_obstacle_iterations: max_iterations,
        max_violation,
        penalty: rho_pen,
    };
    Ok(ValueSurface::new(
        grid.clone(),
        levels,
        masks,
        payoff.clone(),
        opts.mode,
        clamp,
        shift,
        p.r,
        lambda,
        extrapolated_mass,
        diagnostics,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::black_scholes_put;
    use crate::dynamics::ModelParams;
    use crate::kernel::{JumpMeasure, LevyKernel};

    fn null_model(r: f64) -> BnsModel {
        BnsModel::new(ModelParams::new(1.0, -0.5, r, 1.0).unwrap(), JumpMeasure::untilted(LevyKernel::null())).unwrap()
    }

    #[test]
    fn terminal_level_is_payoff() {
        let grid = Grid::uniform(-1.0, 1.0, 21, 0.0, 0.2, 5, 4, 1.0).unwrap();
        let put = Payoff::put(1.0).unwrap();
        let s = solve(&grid, &null_model(0.03), &put, &SolverOptions::default()).unwrap();
        for i in 0..21 {
            for j in 0..5 {
                assert_eq!(s.value(4, i, j), put.evaluate(grid.x()[i]));
                assert_eq!(s.value(0, i, 0), put.evaluate(grid.x()[i]));
            }
        }
    }

    #[test]
    fn european_null_kernel_near_black_scholes() {
        let grid = Grid::uniform(-1.0, 1.0, 121, 0.01, 0.04, 11, 100, 1.0).unwrap();
        let put = Payoff::put(1.0).unwrap();
        let model = null_model(0.03);
        let s = solve(&grid, &model, &put, &SolverOptions::european()).unwrap();
        let j = grid.v_index(0.04).unwrap();
        let i = grid.x_index(0.0).unwrap();
        let bs = black_scholes_put(0.0, 1.0, 0.03, 1.0, 0.04 * model.params.epsilon(1.0));
        assert!((s.value(0, i, j) / bs - 1.0).abs() < 1e-2, "{} vs {bs}", s.value(0, i, j));
    }

    #[test]
    fn stability_guard_trips() {
        let grid = Grid::uniform(-1.0, 1.0, 21, 0.0, 2.0, 41, 1, 1.0).unwrap();
        let jm = JumpMeasure::untilted(LevyKernel::gamma_ou(5.0, 20.0).unwrap());
        let model = BnsModel::new(ModelParams::new(1.0, -0.5, 0.0, 1.0).unwrap(), jm).unwrap();
        let err = solve(&grid, &model, &Payoff::put(1.0).unwrap(), &SolverOptions::default()).unwrap_err();
        assert!(matches!(err, SolverError::Stability { .. }));
    }
}
