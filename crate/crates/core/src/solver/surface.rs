use std::io::Write;
use std::path::Path;

use crate::dynamics::epsilon;
use crate::error::SolverError;
use crate::payoff::Payoff;
use crate::solver::generator::{bilinear, locate, locate_uniform};
use crate::solver::grid::Grid;
use crate::solver::march::ExerciseMode;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveDiagnostics {
    pub xi: f64,
    pub quadrature_nodes: usize,
    pub jump_mass: f64,
    pub residual_mean: f64,
    pub tail_mass: f64,
    /// Measured explicit-part stability quantity.
    pub stability: f64,
    pub max_obstacle_iterations: usize,
    /// `max(h − u)` over all nodes.
    pub max_violation: f64,
    pub penalty: f64,
}

/// Solved `u(x, v, t_n)` on every time level, with the exercise mask.
#[derive(Debug, Clone)]
pub struct ValueSurface {
    grid: Grid,
    levels: Vec<Vec<f64>>,
    exercise: Vec<Vec<bool>>,
    payoff: Payoff,
    mode: ExerciseMode,
    clamped_edge: bool,
    boundary_shift: f64,
    r: f64,
    lambda: f64,
    extrapolated_mass: Vec<f64>,
    pub diagnostics: SolveDiagnostics,
}

impl ValueSurface {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        grid: Grid,
        levels: Vec<Vec<f64>>,
        exercise: Vec<Vec<bool>>,
        payoff: Payoff,
        mode: ExerciseMode,
        clamped_edge: bool,
        boundary_shift: f64,
        r: f64,
        lambda: f64,
        extrapolated_mass: Vec<f64>,
        diagnostics: SolveDiagnostics,
    ) -> Self {
        Self {
            grid,
            levels,
            exercise,
            payoff,
            mode,
            clamped_edge,
            boundary_shift,
            r,
            lambda,
            extrapolated_mass,
            diagnostics,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn payoff(&self) -> &Payoff {
        &self.payoff
    }

    pub fn mode(&self) -> ExerciseMode {
        self.mode
    }

    pub fn clamped_edge(&self) -> bool {
        self.clamped_edge
    }

    pub fn boundary_shift(&self) -> f64 {
        self.boundary_shift
    }

    pub fn rate(&self) -> f64 {
        self.r
    }

    /// Values at time level `n`, slice-major.
    pub fn level(&self, n: usize) -> &[f64] {
        &self.levels[n]
    }

    pub fn value(&self, n: usize, i: usize, j: usize) -> f64 {
        self.levels[n][j * self.grid.n_x() + i]
    }

    pub fn exercised(&self, n: usize, i: usize, j: usize) -> bool {
        self.exercise[n][j * self.grid.n_x() + i]
    }

    /// `ε(t_n)` for the remaining life `T − t_n`.
    pub fn epsilon_remaining(&self, n: usize) -> f64 {
        epsilon(self.lambda, self.grid.horizon() - self.grid.time(n))
    }

    /// Fraction of the jump mass leaving the top of the grid, per slice.
    pub fn extrapolated_mass(&self) -> &[f64] {
        &self.extrapolated_mass
    }

    pub fn max_extrapolated_mass(&self) -> f64 {
        self.extrapolated_mass.iter().cloned().fold(0.0, f64::max)
    }

    /// `min(u − h)` over all nodes and levels.
    pub fn min_obstacle_gap(&self) -> f64 {
        let h: Vec<f64> = self.grid.x().iter().map(|&x| self.payoff.evaluate(x)).collect();
        let n_x = self.grid.n_x();
        self.levels
            .iter()
            .flat_map(|lv| lv.iter().enumerate().map(|(k, &u)| u - h[k % n_x]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Bilinear value at level `n`; errors outside the grid.
    pub fn interpolate(&self, x: f64, v: f64, n: usize) -> Result<f64, SolverError> {
        let (val, outside) = self.interpolate_extended(x, v, n);
        if outside {
            Err(SolverError::OutOfRange { x, v })
        } else {
            Ok(val)
        }
    }

    /// Bilinear value at level `n`, extended linearly outside the grid.
    pub fn interpolate_extended(&self, x: f64, v: f64, n: usize) -> (f64, bool) {
        let g = &self.grid;
        let sx = locate_uniform(g.x()[0], g.dx(), g.n_x(), x);
        let sv = locate(g.v(), v);
        (bilinear(&self.levels[n], g.n_x(), sx, sv), sx.extrapolated() || sv.extrapolated())
    }

    /// `u(x, v, 0)`.
    pub fn price(&self, x: f64, v: f64) -> Result<f64, SolverError> {
        self.interpolate(x, v, 0)
    }

    /// Critical log-price per `(level, slice)`: the upper end of the
    /// exercise region, refined inside the last binding cell using the
    /// quadratic contact of `u − h`. `None` where the obstacle never binds.
    pub fn exercise_boundary(&self) -> Vec<Vec<Option<f64>>> {
        let g = &self.grid;
        let (n_x, xs) = (g.n_x(), g.x());
        let h: Vec<f64> = xs.iter().map(|&x| self.payoff.evaluate(x)).collect();
        (0..=g.n_t())
            .map(|n| {
                (0..g.n_v())
                    .map(|j| {
                        if n == g.n_t() {
                            return self.payoff_root();
                        }
                        let mut last = None;
                        for i in 1..n_x - 1 {
                            if self.exercised(n, i, j) && h[i] > 0.0 {
                                last = Some(i);
                            } else if last.is_some() {
                                break;
                            }
                        }
                        let i = last?;
                        if i + 2 >= n_x {
                            return Some(xs[i]);
                        }
                        let g1 = (self.value(n, i + 1, j) - h[i + 1]).max(0.0).sqrt();
                        let g2 = (self.value(n, i + 2, j) - h[i + 2]).max(0.0).sqrt();
                        let dx = g.dx();
                        let x = if g2 > g1 { xs[i + 1] - dx * g1 / (g2 - g1) } else { xs[i] };
                        Some(x.clamp(xs[i], xs[i + 1]))
                    })
                    .collect()
            })
            .collect()
    }

    /// Upper end of `{h > 0}` on the grid range.
    fn payoff_root(&self) -> Option<f64> {
        let xs = self.grid.x();
        let pos: Vec<bool> = xs.iter().map(|&x| self.payoff.evaluate(x) > 0.0).collect();
        let i = pos.iter().rposition(|&b| b)?;
        if i + 1 == xs.len() {
            return Some(xs[i]);
        }
        let (mut lo, mut hi) = (xs[i], xs[i + 1]);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.payoff.evaluate(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// Columns `t, x, v, u, exercised`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "v", "u", "exercised"])?;
        let g = &self.grid;
        for n in 0..=g.n_t() {
            let t = g.time(n);
            for (j, &v) in g.v().iter().enumerate() {
                for (i, &x) in g.x().iter().enumerate() {
                    w.write_record(&[
                        t.to_string(),
                        x.to_string(),
                        v.to_string(),
                        self.value(n, i, j).to_string(),
                        (self.exercised(n, i, j) as u8).to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<(), csv::Error> {
        self.write_csv(std::fs::File::create(path)?)
    }
}
