//! Discretization of the nonlocal jump term.
//!
//! The jump integral is split at a small-jump cutoff `ξ`: on `(0, ξ)` the
//! integrand is replaced by its second-order Taylor expansion, which needs
//! only `∫_0^ξ z W(dz)` and `∫_0^ξ z² W(dz)`; on `[ξ, z_max]` a product rule
//! with nonnegative weights is used; beyond `z_max` the measure is dropped,
//! with the dropped `∫ (1 + z) W(dz)` certified below a tolerance.
//!
//! The weights come from distributing each panel's exact mass and first
//! moment linearly onto its two end nodes, so they reproduce
//! `∫_ξ^{z_max} W(dz)` and `∫_ξ^{z_max} z W(dz)` exactly.

use crate::error::KernelError;
use crate::kernel::JumpMeasure;

pub const DEFAULT_TAIL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct JumpQuadrature {
    pub xi: f64,
    pub z_max: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `∫_0^ξ z W(dz)`.
    pub small_m1: f64,
    /// `∫_0^ξ z² W(dz)`.
    pub small_m2: f64,
    /// `∫_{z_max}^∞ (1 + z) W(dz)`.
    pub tail_mass: f64,
    /// `μ₁` of the full measure.
    pub mu1: f64,
    panel_m0: f64,
    panel_m1: f64,
}

impl JumpQuadrature {
    /// Quadrature with panels no wider than `spacing`, nodes on multiples of
    /// `spacing` above `xi` (so they align with a uniform variance grid).
    pub fn build(jumps: &JumpMeasure, xi: f64, spacing: f64, tail_tol: f64) -> Result<Self, KernelError> {
        if jumps.is_null() {
            return Ok(Self::empty());
        }
        if !(0.0..1.0).contains(&xi) {
            return Err(KernelError::InvalidParameter(format!("small-jump cutoff must lie in [0, 1), got {xi}")));
        }
        if xi == 0.0 && !jumps.kernel.finite_activity() {
            return Err(KernelError::InvalidParameter("infinite-activity kernels need a positive cutoff xi".into()));
        }
        if !(spacing > 0.0) {
            return Err(KernelError::InvalidParameter("quadrature spacing must be > 0".into()));
        }
        let z_max = jumps.truncation_point(tail_tol)?.max(xi + spacing);
        let mut nodes = vec![xi];
        let mut k = (xi / spacing).floor() + 1.0;
        loop {
            let z = k * spacing;
            if z >= z_max {
                break;
            }
            if z - xi > 1e-9 * spacing {
                nodes.push(z);
            }
            k += 1.0;
        }
        let last = (k * spacing).max(z_max);
        nodes.push(last);
        let z_max = last;

        let mut weights = vec![0.0; nodes.len()];
        let (mut m0_total, mut m1_total) = (0.0, 0.0);
        for p in 0..nodes.len() - 1 {
            let (lo, hi) = (nodes[p], nodes[p + 1]);
            let m0 = jumps.partial_moment(0, lo, hi)?;
            let m1 = jumps.partial_moment(1, lo, hi)?;
            let h = hi - lo;
            weights[p] += ((hi * m0 - m1) / h).max(0.0);
            weights[p + 1] += ((m1 - lo * m0) / h).max(0.0);
            m0_total += m0;
            m1_total += m1;
        }
        Ok(Self {
            xi,
            z_max,
            nodes,
            weights,
            small_m1: jumps.partial_moment(1, 0.0, xi)?,
            small_m2: jumps.partial_moment(2, 0.0, xi)?,
            tail_mass: jumps.tail_mass(z_max)?,
            mu1: jumps.moment(1)?,
            panel_m0: m0_total,
            panel_m1: m1_total,
        })
    }

    pub fn empty() -> Self {
        Self {
            xi: 0.0,
            z_max: 0.0,
            nodes: Vec::new(),
            weights: Vec::new(),
            small_m1: 0.0,
            small_m2: 0.0,
            tail_mass: 0.0,
            mu1: 0.0,
            panel_m0: 0.0,
            panel_m1: 0.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ w_k`.
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ w_k z_k`.
    pub fn first_moment(&self) -> f64 {
        self.weights.iter().zip(&self.nodes).map(|(w, z)| w * z).sum()
    }

    /// `Σ w_k z_k²`.
    pub fn second_moment(&self) -> f64 {
        self.weights.iter().zip(&self.nodes).map(|(w, z)| w * z * z).sum()
    }

    /// Mean of the measure not carried by the quadrature nodes,
    /// `μ₁ − Σ w_k z_k` (small jumps plus truncated tail).
    pub fn residual_mean(&self) -> f64 {
        self.mu1 - self.first_moment()
    }

    /// Absolute mismatch of the discrete zeroth and first moments against
    /// the panel integrals used to build them.
    pub fn moment_mismatch(&self) -> (f64, f64) {
        ((self.total_mass() - self.panel_m0).abs(), (self.first_moment() - self.panel_m1).abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::LevyKernel;

    #[test]
    fn null_is_empty() {
        let q = JumpQuadrature::build(&JumpMeasure::untilted(LevyKernel::null()), 0.0, 0.01, 1e-8).unwrap();
        assert!(q.is_empty());
        assert_eq!(q.total_mass(), 0.0);
    }

    #[test]
    fn gamma_nodes_align_and_moments_match() {
        let jm = JumpMeasure::untilted(LevyKernel::gamma_ou(1.0, 20.0).unwrap());
        let q = JumpQuadrature::build(&jm, 0.0, 0.005, 1e-8).unwrap();
        assert!(q.weights.iter().all(|&w| w >= 0.0));
        for (k, z) in q.nodes.iter().enumerate() {
            assert!((z - 0.005 * k as f64).abs() < 1e-12);
        }
        assert!(q.tail_mass < 1e-8);
        let (e0, e1) = q.moment_mismatch();
        assert!(e0 < 1e-10 && e1 < 1e-10);
        assert!((q.total_mass() - (1.0 - 0.0)).abs() < 1e-8);
        assert!((q.first_moment() - 0.05).abs() < 1e-8);
    }

    #[test]
    fn ig_requires_cutoff() {
        let jm = JumpMeasure::untilted(LevyKernel::inverse_gaussian_ou(1.0, 1.0).unwrap());
        assert!(JumpQuadrature::build(&jm, 0.0, 0.01, 1e-8).is_err());
        let q = JumpQuadrature::build(&jm, 1e-3, 0.01, 1e-8).unwrap();
        assert_eq!(q.nodes[0], 1e-3);
        assert!(q.small_m1 > 0.0 && q.small_m2 > 0.0);
        assert!(q.small_m2 < q.small_m1 * 1e-3);
    }
}
