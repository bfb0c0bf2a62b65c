//! The integro-differential operator `𝓛` applied to grid functions.

use crate::dynamics::BnsModel;
use crate::error::SolverError;
use crate::solver::grid::Grid;
use crate::solver::jumps::JumpQuadrature;

/// Values on the `(x, v)` nodes of a grid, slice-major (`j·n_x + i`).
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    x: Vec<f64>,
    v: Vec<f64>,
    values: Vec<f64>,
}

/// Cell index and fractional position along one axis; the fraction lies
/// outside `[0, 1]` when the point is extrapolated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisStencil {
    pub cell: usize,
    pub frac: f64,
}

impl AxisStencil {
    pub fn extrapolated(&self) -> bool {
        self.frac < -1e-12 || self.frac > 1.0 + 1e-12
    }
}

pub fn locate(nodes: &[f64], p: f64) -> AxisStencil {
    let n = nodes.len();
    let cell = nodes.partition_point(|&z| z <= p).saturating_sub(1).min(n - 2);
    AxisStencil { cell, frac: (p - nodes[cell]) / (nodes[cell + 1] - nodes[cell]) }
}

pub fn locate_uniform(x0: f64, dx: f64, n: usize, p: f64) -> AxisStencil {
    let q = (p - x0) / dx;
    let cell = (q.floor().max(0.0) as usize).min(n - 2);
    AxisStencil { cell, frac: q - cell as f64 }
}

impl GridFunction {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self, SolverError> {
        if values.len() != grid.n_x() * grid.n_v() {
            return Err(SolverError::GridMismatch);
        }
        Ok(Self { x: grid.x().to_vec(), v: grid.v().to_vec(), values })
    }

    /// Samples a closed-form `ψ(x, v)` on the grid nodes.
    pub fn sample<F: Fn(f64, f64) -> f64>(grid: &Grid, f: F) -> Self {
        let mut values = Vec::with_capacity(grid.n_x() * grid.n_v());
        for &v in grid.v() {
            for &x in grid.x() {
                values.push(f(x, v));
            }
        }
        Self { x: grid.x().to_vec(), v: grid.v().to_vec(), values }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.x.len() + i]
    }

    /// Bilinear interpolation, extended linearly outside the grid. The flag
    /// reports whether extrapolation was needed.
    pub fn interpolate(&self, x: f64, v: f64) -> (f64, bool) {
        let n_x = self.x.len();
        let sx = locate_uniform(self.x[0], self.x[1] - self.x[0], n_x, x);
        let sv = locate(&self.v, v);
        (bilinear(&self.values, n_x, sx, sv), sx.extrapolated() || sv.extrapolated())
    }
}

pub(crate) fn bilinear(values: &[f64], n_x: usize, sx: AxisStencil, sv: AxisStencil) -> f64 {
    let row = |j: usize| {
        let a = values[j * n_x + sx.cell];
        let b = values[j * n_x + sx.cell + 1];
        a + sx.frac * (b - a)
    };
    let lo = row(sv.cell);
    let hi = row(sv.cell + 1);
    lo + sv.frac * (hi - lo)
}

/// Constant coefficients of `𝓛` for a model and jump quadrature.
#[derive(Debug, Clone)]
pub struct GeneratorCoeffs {
    pub lambda: f64,
    pub rho: f64,
    pub r: f64,
    /// `κ^y(ρ)`.
    pub kappa_rho: f64,
    /// `μ₁` of the (tilted) measure.
    pub mu1: f64,
    pub quad: JumpQuadrature,
}

impl GeneratorCoeffs {
    pub fn new(model: &BnsModel, quad: JumpQuadrature) -> Result<Self, SolverError> {
        let p = model.params;
        Ok(Self {
            lambda: p.lambda,
            rho: p.rho,
            r: p.r,
            kappa_rho: model.kappa_rho(),
            mu1: model.jumps.moment(1)?,
            quad,
        })
    }

    /// `r − ½v − λκ^y(ρ) + λρμ₁`.
    pub fn x_drift(&self, v: f64) -> f64 {
        self.r - 0.5 * v - self.lambda * self.kappa_rho + self.lambda * self.rho * self.mu1
    }

    /// Exact `𝓛[x²]` at `(x, v)`: the quadratic picks up `λρ²μ₂` from the jumps.
    pub fn exact_on_x_squared(&self, x: f64, v: f64, mu2: f64) -> f64 {
        2.0 * x * self.x_drift(v) + v + self.lambda * self.rho * self.rho * mu2
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorValue {
    pub value: f64,
    /// Quadrature weight whose displaced point left the grid.
    pub extrapolated_weight: f64,
}

/// `𝓛[ψ]` at the interior node `(i, j)`:
/// `(r − ½v − λκ + λρμ₁)ψ_x − λ(v − μ₁)ψ_v + ½vψ_xx + λ·J[ψ]`,
/// with central differences and the split jump integral
/// `J = Σ w_k (ψ(x+ρz_k, v+z_k) − ψ − z_k(ρψ_x + ψ_v)) + ½ m₂^ξ (ρ²ψ_xx + 2ρψ_xv + ψ_vv)`.
pub fn apply_generator(psi: &GridFunction, i: usize, j: usize, c: &GeneratorCoeffs) -> Result<GeneratorValue, SolverError> {
    let (xs, vs) = (psi.x(), psi.v());
    if i == 0 || j == 0 || i + 1 >= xs.len() || j + 1 >= vs.len() {
        return Err(SolverError::OutOfRange { x: xs[i.min(xs.len() - 1)], v: vs[j.min(vs.len() - 1)] });
    }
    let (x, v) = (xs[i], vs[j]);
    let dx = xs[1] - xs[0];
    let (hm, hp) = (v - vs[j - 1], vs[j + 1] - v);
    let u = |ii: usize, jj: usize| psi.at(ii, jj);

    let u0 = u(i, j);
    let ux = (u(i + 1, j) - u(i - 1, j)) / (2.0 * dx);
    let uxx = (u(i + 1, j) - 2.0 * u0 + u(i - 1, j)) / (dx * dx);
    // Three-point formulas on a possibly nonuniform v-stencil.
    let uv = (hm * hm * u(i, j + 1) - hp * hp * u(i, j - 1) + (hp * hp - hm * hm) * u0) / (hm * hp * (hm + hp));
    let uvv = 2.0 * (hm * u(i, j + 1) - (hm + hp) * u0 + hp * u(i, j - 1)) / (hm * hp * (hm + hp));
    let uxv = (u(i + 1, j + 1) - u(i - 1, j + 1) - u(i + 1, j - 1) + u(i - 1, j - 1)) / (2.0 * dx * (hm + hp));

    let q = &c.quad;
    let mut jump = 0.5 * q.small_m2 * (c.rho * c.rho * uxx + 2.0 * c.rho * uxv + uvv);
    let mut off = 0.0;
    for (&z, &w) in q.nodes.iter().zip(&q.weights) {
        let (shifted, ext) = psi.interpolate(x + c.rho * z, v + z);
        if ext {
            off += w;
        }
        jump += w * (shifted - u0 - z * (c.rho * ux + uv));
    }

    let value = c.x_drift(v) * ux - c.lambda * (v - c.mu1) * uv + 0.5 * v * uxx + c.lambda * jump;
    Ok(GeneratorValue { value, extrapolated_weight: off })
}
