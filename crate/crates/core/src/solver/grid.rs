use crate::error::SolverError;
use crate::kernel::JumpMeasure;
use crate::payoff::Payoff;

/// Quantile of `Z_{λT}` used for the variance headroom.
pub const HEADROOM_QUANTILE: f64 = 0.999;

/// Tensor grid in `(x, v)` with uniform time levels over `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    x: Vec<f64>,
    v: Vec<f64>,
    n_t: usize,
    horizon: f64,
}

impl Grid {
    /// Uniform grid on `[x_min, x_max] × [v_lo, v_max]` with `n_t` steps.
    pub fn uniform(
        x_min: f64,
        x_max: f64,
        n_x: usize,
        v_lo: f64,
        v_max: f64,
        n_v: usize,
        n_t: usize,
        horizon: f64,
    ) -> Result<Self, SolverError> {
        if n_x < 4 || n_v < 4 {
            return Err(SolverError::InvalidGrid(format!("need at least 4 nodes per axis, got {n_x}x{n_v}")));
        }
        let x = linspace(x_min, x_max, n_x);
        let v = linspace(v_lo, v_max, n_v);
        Self::from_nodes(x, v, n_t, horizon)
    }

    /// Variance nodes refined geometrically toward `v_lo`: cell widths grow
    /// by `ratio` from the bottom.
    pub fn geometric_v(
        x_min: f64,
        x_max: f64,
        n_x: usize,
        v_lo: f64,
        v_max: f64,
        n_v: usize,
        ratio: f64,
        n_t: usize,
        horizon: f64,
    ) -> Result<Self, SolverError> {
        if !(ratio.is_finite() && ratio >= 1.0) {
            return Err(SolverError::InvalidGrid("geometric ratio must be >= 1".into()));
        }
        if n_v < 4 {
            return Err(SolverError::InvalidGrid("need at least 4 variance nodes".into()));
        }
        let cells = n_v - 1;
        let total: f64 = (0..cells).map(|k| ratio.powi(k as i32)).sum();
        let h0 = (v_max - v_lo) / total;
        let mut v = Vec::with_capacity(n_v);
        let mut acc = v_lo;
        v.push(acc);
        for k in 0..cells {
            acc += h0 * ratio.powi(k as i32);
            v.push(acc);
        }
        v[cells] = v_max;
        Self::from_nodes(linspace(x_min, x_max, n_x), v, n_t, horizon)
    }

    pub fn from_nodes(x: Vec<f64>, v: Vec<f64>, n_t: usize, horizon: f64) -> Result<Self, SolverError> {
        if x.len() < 4 || v.len() < 4 {
            return Err(SolverError::InvalidGrid("need at least 4 nodes per axis".into()));
        }
        if n_t < 1 {
            return Err(SolverError::InvalidGrid("need at least one time step".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(SolverError::InvalidGrid("horizon must be > 0".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) || v.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SolverError::InvalidGrid("nodes must be strictly increasing".into()));
        }
        if v[0] < 0.0 {
            return Err(SolverError::InvalidGrid("variance nodes must be >= 0".into()));
        }
        let dx = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
        if x.windows(2).any(|w| ((w[1] - w[0]) - dx).abs() > 1e-9 * dx) {
            return Err(SolverError::InvalidGrid("log-price nodes must be uniform".into()));
        }
        Ok(Self { x, v, n_t, horizon })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn n_x(&self) -> usize {
        self.x.len()
    }

    pub fn n_v(&self) -> usize {
        self.v.len()
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dx(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_t as f64
    }

    /// Lower variance edge: 0 for the full domain, δ for a localized one.
    pub fn delta(&self) -> f64 {
        self.v[0]
    }

    /// Calendar time of level `n`, `n = 0..=n_t`.
    pub fn time(&self, n: usize) -> f64 {
        if n == self.n_t {
            self.horizon
        } else {
            self.horizon * n as f64 / self.n_t as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_t).map(|n| self.time(n)).collect()
    }

    pub fn is_uniform_v(&self) -> bool {
        let h = self.v[1] - self.v[0];
        self.v.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h)
    }

    /// Same grid with every variance node below `delta` removed; `delta`
    /// must coincide with a node.
    pub fn restrict_below(&self, delta: f64) -> Result<Self, SolverError> {
        let tol = 1e-9 * (self.v[self.v.len() - 1] - self.v[0]);
        let start = self
            .v
            .iter()
            .position(|&v| (v - delta).abs() <= tol)
            .ok_or_else(|| SolverError::InvalidGrid(format!("delta = {delta} is not a variance node")))?;
        let mut v = self.v[start..].to_vec();
        v[0] = delta;
        Self::from_nodes(self.x.clone(), v, self.n_t, self.horizon)
    }

    /// Index of the node equal to `v` (within a relative 1e-9), if any.
    pub fn v_index(&self, v: f64) -> Option<usize> {
        let tol = 1e-9 * (self.v[self.v.len() - 1] - self.v[0]).max(1e-300);
        self.v.iter().position(|&n| (n - v).abs() <= tol)
    }

    pub fn x_index(&self, x: f64) -> Option<usize> {
        let q = (x - self.x[0]) / self.dx();
        let i = q.round();
        ((q - i).abs() < 1e-9 && i >= 0.0 && (i as usize) < self.x.len()).then_some(i as usize)
    }

    /// Checks the sizing rules: strike strictly inside the log-price range
    /// for puts, and variance headroom `v_max ≥ v₀ + q_{0.999}(Z_{λT})`.
    pub fn check_sizing(&self, payoff: &Payoff, jumps: &JumpMeasure, lambda: f64, v0: f64) -> Result<(), SolverError> {
        if payoff.is_put() {
            let k = payoff.strike().expect("put has a strike").ln();
            if !(self.x[0] < k && k < self.x[self.x.len() - 1]) {
                return Err(SolverError::InvalidGrid(format!(
                    "log-strike {k:.4} must lie inside ({:.4}, {:.4})",
                    self.x[0],
                    self.x[self.x.len() - 1]
                )));
            }
        }
        let need = required_v_max(jumps, lambda, self.horizon, v0);
        let v_max = self.v[self.v.len() - 1];
        if v_max < need * (1.0 - 1e-12) {
            return Err(SolverError::InvalidGrid(format!(
                "v_max = {v_max} is below v0 + q{HEADROOM_QUANTILE}(Z_lambdaT) = {need:.6}"
            )));
        }
        Ok(())
    }
}

/// `v₀ + q_{0.999}(Z_{λT})`.
pub fn required_v_max(jumps: &JumpMeasure, lambda: f64, horizon: f64, v0: f64) -> f64 {
    v0 + jumps.quantile_upper(lambda * horizon, HEADROOM_QUANTILE)
}

pub(crate) fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let h = (b - a) / (n - 1) as f64;
    let mut out: Vec<f64> = (0..n).map(|i| a + h * i as f64).collect();
    out[n - 1] = b;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::LevyKernel;

    #[test]
    fn rejects_small_grids() {
        assert!(Grid::uniform(-1.0, 1.0, 3, 0.0, 1.0, 10, 10, 1.0).is_err());
        assert!(Grid::uniform(-1.0, 1.0, 10, 0.0, 1.0, 10, 0, 1.0).is_err());
    }

    #[test]
    fn restrict_keeps_upper_nodes() {
        let g = Grid::uniform(-1.0, 1.0, 11, 0.0, 0.1, 41, 10, 1.0).unwrap();
        let r = g.restrict_below(0.01).unwrap();
        assert_eq!(r.n_v(), 37);
        assert_eq!(r.delta(), 0.01);
        assert!(g.restrict_below(0.0101).is_err());
    }

    #[test]
    fn geometric_refines_bottom() {
        let g = Grid::geometric_v(-1.0, 1.0, 11, 0.0, 1.0, 11, 1.2, 10, 1.0).unwrap();
        let v = g.v();
        assert!(v[1] - v[0] < v[10] - v[9]);
        assert_eq!(v[10], 1.0);
        assert!(!g.is_uniform_v());
    }

    #[test]
    fn sizing_checks() {
        let put = Payoff::put(1.0).unwrap();
        let jm = JumpMeasure::untilted(LevyKernel::gamma_ou(1.0, 20.0).unwrap());
        let need = required_v_max(&jm, 1.0, 1.0, 0.04);
        assert!(need > 0.04);
        let ok = Grid::uniform(-1.0, 1.0, 11, 0.0, need + 0.01, 11, 10, 1.0).unwrap();
        assert!(ok.check_sizing(&put, &jm, 1.0, 0.04).is_ok());
        let short = Grid::uniform(-1.0, 1.0, 11, 0.0, 0.05, 11, 10, 1.0).unwrap();
        assert!(short.check_sizing(&put, &jm, 1.0, 0.04).is_err());
        let off = Grid::uniform(0.5, 1.0, 11, 0.0, need + 0.01, 11, 10, 1.0).unwrap();
        assert!(off.check_sizing(&put, &jm, 1.0, 0.04).is_err());
    }
}
