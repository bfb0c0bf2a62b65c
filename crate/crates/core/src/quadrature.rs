//! Adaptive panel quadrature on finite intervals.
//!
//! Each panel is integrated with the tanh-sinh rule from the `quadrature`
//! crate, which tolerates integrable endpoint singularities such as the
//! `z^{-1/2}` behaviour of the inverse-Gaussian jump density at the origin.
//! Panels whose error estimate is too large are bisected.

use crate::error::KernelError;

const MAX_PANELS: usize = 4000;

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: u64,
}

struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrates `f` over `[a, b]` to relative tolerance `rel_tol`, with
/// `abs_floor` as an absolute accuracy floor for integrals close to zero.
pub fn integrate<F>(f: F, a: f64, b: f64, rel_tol: f64, abs_floor: f64) -> Result<QuadResult, KernelError>
where
    F: Fn(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(KernelError::Integration { tol: rel_tol, estimate: f64::NAN, error: f64::INFINITY });
    }
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };

    let mut evaluations = 0u64;
    let mut run = |l: f64, h: f64| -> Result<Panel, KernelError> {
        let out = quadrature::integrate(&f, l, h, 1e-14 * (h - l).max(1e-300));
        evaluations += out.num_function_evaluations as u64;
        if !out.integral.is_finite() {
            return Err(KernelError::Integration { tol: rel_tol, estimate: out.integral, error: f64::INFINITY });
        }
        Ok(Panel { lo: l, hi: h, value: out.integral, error: out.error_estimate.abs() })
    };

    // Worst panel first; stop once the summed error estimate is within target.
    let mut heap = std::collections::BinaryHeap::new();
    heap.push(run(lo, hi)?);
    let mut panels = 1usize;
    loop {
        let value: f64 = heap.iter().map(|p| p.value).sum();
        let error: f64 = heap.iter().map(|p| p.error).sum();
        let target = (rel_tol * value.abs()).max(abs_floor);
        if error <= target {
            return Ok(QuadResult { value: sign * value, error, evaluations });
        }
        if panels >= MAX_PANELS {
            return Err(KernelError::Integration { tol: rel_tol, estimate: sign * value, error });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if !(mid > worst.lo && mid < worst.hi) {
            // Cannot split further; keep the panel as is.
            heap.push(Panel { error: 0.0, ..worst });
            continue;
        }
        heap.push(run(worst.lo, mid)?);
        heap.push(run(mid, worst.hi)?);
        panels += 1;
    }
}
