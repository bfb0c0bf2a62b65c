//! Exact simulation of the BNS volatility, integrated variance and
//! risk-neutral log-price.
//!
//! Between jumps of `Z_{λ·}` the variance follows `dV = −λV dt` (plus the
//! small-jump compensating drift for infinite-activity kernels), so `V`,
//! `V*` and `Z_{λ·}` are evaluated exactly at any set of times. Conditional
//! on the jump path, `∫√V dB` over `[s, t]` is Gaussian with variance
//! `V*_t − V*_s`, which makes the log-price exact as well.

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Poisson, StandardNormal};

use crate::error::{KernelError, ModelError};
use crate::kernel::{JumpMeasure, KernelKind, LevyKernel};
use crate::rng::PathRng;

/// Small-jump cutoff used when simulating infinite-activity kernels.
pub const DEFAULT_JUMP_CUTOFF: f64 = 1e-6;

/// Risk-neutral model constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Mean-reversion rate of the variance, also the clock of `Z_{λt}`.
    pub lambda: f64,
    /// Leverage, `≤ 0`.
    pub rho: f64,
    pub r: f64,
    /// Horizon `T`.
    pub horizon: f64,
}

impl ModelParams {
    pub fn new(lambda: f64, rho: f64, r: f64, horizon: f64) -> Result<Self, ModelError> {
        let bad = |what: &str| Err(ModelError::InvalidParameter(what.to_string()));
        if !(lambda.is_finite() && lambda > 0.0) {
            return bad("lambda must be > 0");
        }
        if !(rho.is_finite() && rho <= 0.0) {
            return bad("rho must be <= 0");
        }
        if !(r.is_finite() && r >= 0.0) {
            return bad("r must be >= 0");
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return bad("horizon T must be > 0");
        }
        Ok(Self { lambda, rho, r, horizon })
    }

    /// `ε(t) = (1 − e^{−λt}) / λ`.
    pub fn epsilon(&self, t: f64) -> f64 {
        epsilon(self.lambda, t)
    }
}

pub fn epsilon(lambda: f64, t: f64) -> f64 {
    -(-lambda * t).exp_m1() / lambda
}

/// Physical-measure drift `μ + βV` of the log-price. Never used for
/// pricing; it only feeds [`girsanov_shift`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalDrift {
    pub mu: f64,
    pub beta: f64,
}

/// Integrand of the Brownian drift change `B^ℚ_t = B_t − ∫ shift(V_s) ds`.
pub fn girsanov_shift(model: &BnsModel, drift: PhysicalDrift, v: f64) -> f64 {
    let p = &model.params;
    (p.r - drift.mu - (drift.beta + 0.5) * v - p.lambda * model.kappa_rho) / v.sqrt()
}

/// Model under a chosen martingale measure: parameters plus jump law.
#[derive(Debug, Clone)]
pub struct BnsModel {
    pub params: ModelParams,
    pub jumps: JumpMeasure,
    kappa_rho: f64,
    sampler: JumpSampler,
}

impl BnsModel {
    pub fn new(params: ModelParams, jumps: JumpMeasure) -> Result<Self, ModelError> {
        Self::with_cutoff(params, jumps, DEFAULT_JUMP_CUTOFF)
    }

    pub fn with_cutoff(params: ModelParams, jumps: JumpMeasure, cutoff: f64) -> Result<Self, ModelError> {
        // ρ ≤ 0 keeps κ^y(ρ) finite for every kernel.
        let kappa_rho = jumps.cumulant(params.rho)?;
        let sampler = JumpSampler::build(&jumps, cutoff)?;
        Ok(Self { params, jumps, kappa_rho, sampler })
    }

    pub fn kernel(&self) -> &LevyKernel {
        &self.jumps.kernel
    }

    /// `κ^y(ρ)`.
    pub fn kappa_rho(&self) -> f64 {
        self.kappa_rho
    }

    /// Deterministic part of the log-price drift, `r − λκ^y(ρ)`.
    pub fn log_drift(&self) -> f64 {
        self.params.r - self.params.lambda * self.kappa_rho
    }

    pub fn jump_cutoff(&self) -> f64 {
        self.sampler.cutoff()
    }
}

#[derive(Debug, Clone)]
enum JumpSampler {
    None,
    /// Gamma-OU: proposal rate `a·bound`, sizes `Exp(b)`, thinned by `y/bound`.
    CompoundExp { rate: f64, b: f64, bound: f64 },
    /// IG-OU jumps above `cutoff`, drawn from the two-term mixture
    /// `K z^{-3/2} e^{-cz} + K b² z^{-1/2} e^{-cz}`.
    TruncatedIg { cutoff: f64, mass_a: f64, mass_b: f64, c: f64, bound: f64, drift: f64, dropped_var: f64 },
}

impl JumpSampler {
    fn build(jumps: &JumpMeasure, cutoff: f64) -> Result<Self, KernelError> {
        let bound = || {
            jumps
                .thinning_bound()
                .ok_or_else(|| KernelError::InvalidTilt("tilt is unbounded; cannot thin jump proposals".into()))
        };
        Ok(match jumps.kernel.kind() {
            KernelKind::Null => Self::None,
            KernelKind::GammaOU { a, b } => {
                let bound = bound()?;
                Self::CompoundExp { rate: a * bound, b, bound }
            }
            KernelKind::InverseGaussianOU { a, b } => {
                let bound = bound()?;
                let k = a / (2.0 * (2.0 * std::f64::consts::PI).sqrt());
                let c = 0.5 * b * b;
                let x = c * cutoff;
                // ∫_ε^∞ z^{-3/2} e^{-cz} dz = c^{1/2} Γ(−½, cε)
                let upper_half = std::f64::consts::PI.sqrt() * statrs::function::erf::erfc(x.sqrt());
                let g_neg_half = 2.0 * (x.powf(-0.5) * (-x).exp() - upper_half);
                let mass_a = k * c.sqrt() * g_neg_half;
                let mass_b = k * b * b * c.powf(-0.5) * upper_half;
                let drift = jumps.partial_moment(1, 0.0, cutoff)?;
                let dropped_var = jumps.partial_moment(2, 0.0, cutoff)?;
                Self::TruncatedIg { cutoff, mass_a: mass_a * bound, mass_b: mass_b * bound, c, bound, drift, dropped_var }
            }
        })
    }

    fn cutoff(&self) -> f64 {
        match self {
            Self::TruncatedIg { cutoff, .. } => *cutoff,
            _ => 0.0,
        }
    }
}

/// Jumps of `Z_{λ·}` on `[0, horizon]` in calendar time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JumpPath {
    pub times: Vec<f64>,
    pub sizes: Vec<f64>,
    /// Compensating drift of `Z` per unit of BDLP time (`Z_{λt}` gains
    /// `λ·drift·t`); nonzero only for truncated infinite-activity kernels.
    pub drift: f64,
    /// Small-jump cutoff (0 when nothing is truncated).
    pub cutoff: f64,
    /// `∫_0^cutoff z² W(dz)`: variance per unit BDLP time replaced by the drift.
    pub truncated_second_moment: f64,
}

impl JumpPath {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Deterministic path with the given jumps and no drift.
    pub fn from_jumps(times: Vec<f64>, sizes: Vec<f64>) -> Self {
        Self { times, sizes, ..Self::default() }
    }
}

/// Draws the jumps of `Z_{λ·}` on `[0, horizon]`.
pub fn simulate_bdlp(model: &BnsModel, horizon: f64, rng: &mut PathRng) -> JumpPath {
    let lambda = model.params.lambda;
    match &model.sampler {
        JumpSampler::None => JumpPath::empty(),
        JumpSampler::CompoundExp { rate, b, bound } => {
            let n = poisson(lambda * rate * horizon, rng);
            let exp = Exp::new(*b).expect("rate b > 0");
            let mut jumps: Vec<(f64, f64)> = Vec::with_capacity(n);
            for _ in 0..n {
                let t = rng.random::<f64>() * horizon;
                let z = exp.sample(rng);
                if thin(&model.jumps, z, *bound, rng) {
                    jumps.push((t, z));
                }
            }
            sorted_path(jumps, 0.0, 0.0, 0.0)
        }
        JumpSampler::TruncatedIg { cutoff, mass_a, mass_b, c, bound, drift, dropped_var } => {
            let total = mass_a + mass_b;
            let n = poisson(lambda * total * horizon, rng);
            let gamma = Gamma::new(0.5, 1.0 / c).expect("valid gamma");
            let mut jumps: Vec<(f64, f64)> = Vec::with_capacity(n);
            for _ in 0..n {
                let t = rng.random::<f64>() * horizon;
                let z = if rng.random::<f64>() * total < *mass_a {
                    // z^{-3/2} proposal on (ε, ∞), accept with e^{-c(z−ε)}
                    loop {
                        let u: f64 = 1.0 - rng.random::<f64>();
                        let z = cutoff / (u * u);
                        if rng.random::<f64>() < (-c * (z - cutoff)).exp() {
                            break z;
                        }
                    }
                } else {
                    loop {
                        let z: f64 = gamma.sample(rng);
                        if z > *cutoff {
                            break z;
                        }
                    }
                };
                if thin(&model.jumps, z, *bound, rng) {
                    jumps.push((t, z));
                }
            }
            sorted_path(jumps, *drift, *cutoff, *dropped_var)
        }
    }
}

fn thin(jumps: &JumpMeasure, z: f64, bound: f64, rng: &mut PathRng) -> bool {
    if jumps.tilt.is_identity() {
        return true;
    }
    rng.random::<f64>() * bound < jumps.tilt.multiplier(z)
}

fn poisson(mean: f64, rng: &mut PathRng) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("finite positive mean");
    let n: f64 = d.sample(rng);
    n as usize
}

fn sorted_path(mut jumps: Vec<(f64, f64)>, drift: f64, cutoff: f64, dropped: f64) -> JumpPath {
    jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (times, sizes) = jumps.into_iter().unzip();
    JumpPath { times, sizes, drift, cutoff, truncated_second_moment: dropped }
}

/// `V_t = v₀ e^{−λt} + Σ_{s_i ≤ t} e^{−λ(t − s_i)} J_i` (+ drift term).
pub fn evolve_v(v0: f64, lambda: f64, jumps: &JumpPath, t: f64) -> f64 {
    let mut v = v0 * (-lambda * t).exp() - jumps.drift * (-lambda * t).exp_m1();
    for (&s, &j) in jumps.times.iter().zip(&jumps.sizes) {
        if s > t {
            break;
        }
        v += (-lambda * (t - s)).exp() * j;
    }
    v
}

/// `V*_t = v₀ ε(t) + Σ_{s_i ≤ t} ε(t − s_i) J_i` (+ drift term).
pub fn integrated_variance(v0: f64, lambda: f64, jumps: &JumpPath, t: f64) -> f64 {
    let mut acc = v0 * epsilon(lambda, t) + jumps.drift * (t - epsilon(lambda, t));
    for (&s, &j) in jumps.times.iter().zip(&jumps.sizes) {
        if s > t {
            break;
        }
        acc += epsilon(lambda, t - s) * j;
    }
    let check = (v0 - evolve_v(v0, lambda, jumps, t) + cumulative_z(lambda, jumps, t)) / lambda;
    debug_assert!(
        (acc - check).abs() <= 1e-9 * (1.0 + acc.abs()),
        "integrated variance identity broken: {acc} vs {check}"
    );
    acc
}

/// `Z_{λt}`.
pub fn cumulative_z(lambda: f64, jumps: &JumpPath, t: f64) -> f64 {
    let mut z = lambda * jumps.drift * t;
    for (&s, &j) in jumps.times.iter().zip(&jumps.sizes) {
        if s > t {
            break;
        }
        z += j;
    }
    z
}

/// One exact draw of `X_t` given the jumps; `normal` is a standard normal.
pub fn evolve_x(model: &BnsModel, x0: f64, v0: f64, jumps: &JumpPath, t: f64, normal: f64) -> f64 {
    let lambda = model.params.lambda;
    let vs = integrated_variance(v0, lambda, jumps, t);
    x0 + model.log_drift() * t - 0.5 * vs + vs.sqrt() * normal + model.params.rho * cumulative_z(lambda, jumps, t)
}

/// State of one trajectory at the requested times.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub v: Vec<f64>,
    pub v_star: Vec<f64>,
    pub x: Vec<f64>,
    pub z_cum: Vec<f64>,
    pub jumps: JumpPath,
}

/// Simulates one path started at `(x0, v0)` and reports it at the sorted,
/// nonnegative `times` (relative to the start).
pub fn simulate_path(model: &BnsModel, x0: f64, v0: f64, times: &[f64], rng: &mut PathRng) -> PathSample {
    let horizon = times.last().copied().unwrap_or(0.0);
    let jumps = simulate_bdlp(model, horizon, rng);
    path_from_jumps(model, x0, v0, times, jumps, rng)
}

/// Evaluates a path for a given jump draw; Gaussian increments come from `rng`.
pub fn path_from_jumps(
    model: &BnsModel,
    x0: f64,
    v0: f64,
    times: &[f64],
    jumps: JumpPath,
    rng: &mut PathRng,
) -> PathSample {
    let lambda = model.params.lambda;
    let rho = model.params.rho;
    let mu = model.log_drift();
    let d = jumps.drift;
    let n = times.len();
    let (mut vs, mut vstar, mut xs, mut zs) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));

    // Sweep over the merged sequence of jump and report times.
    let (mut t, mut v, mut v_int, mut z) = (0.0f64, v0, 0.0f64, 0.0f64);
    let (mut x, mut last_int, mut last_z, mut last_t) = (x0, 0.0f64, 0.0f64, 0.0f64);
    let mut j = 0;
    let advance = |to: f64, t: &mut f64, v: &mut f64, v_int: &mut f64, z: &mut f64| {
        let dt = to - *t;
        if dt > 0.0 {
            let excess = *v - d;
            *v_int += excess * epsilon(lambda, dt) + d * dt;
            *v = excess * (-lambda * dt).exp() + d;
            *z += lambda * d * dt;
            *t = to;
        }
    };
    for &target in times {
        while j < jumps.times.len() && jumps.times[j] <= target {
            advance(jumps.times[j], &mut t, &mut v, &mut v_int, &mut z);
            v += jumps.sizes[j];
            z += jumps.sizes[j];
            j += 1;
        }
        advance(target, &mut t, &mut v, &mut v_int, &mut z);
        let dvar = (v_int - last_int).max(0.0);
        let g: f64 = rng.sample(StandardNormal);
        x += mu * (target - last_t) - 0.5 * dvar + dvar.sqrt() * g + rho * (z - last_z);
        last_int = v_int;
        last_z = z;
        last_t = target;
        vs.push(v);
        vstar.push(v_int);
        xs.push(x);
        zs.push(z);
    }
    PathSample { times: times.to_vec(), v: vs, v_star: vstar, x: xs, z_cum: zs, jumps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::EmmTilt;
    use crate::rng::path_rng;

    fn model(kernel: LevyKernel) -> BnsModel {
        let params = ModelParams::new(1.0, -0.5, 0.03, 1.0).unwrap();
        BnsModel::new(params, JumpMeasure::untilted(kernel)).unwrap()
    }

    #[test]
    fn params_reject_bad_signs() {
        assert!(ModelParams::new(0.0, -0.5, 0.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 0.5, 0.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, -0.1, 1.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn null_kernel_has_no_jumps() {
        let m = model(LevyKernel::null());
        let j = simulate_bdlp(&m, 1.0, &mut path_rng(1, 0));
        assert!(j.times.is_empty() && j.sizes.is_empty());
    }

    #[test]
    fn pure_decay() {
        let v = evolve_v(1.0, 1.0, &JumpPath::empty(), 1.0);
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn single_jump() {
        let j = JumpPath::from_jumps(vec![0.5], vec![2.0]);
        let v = evolve_v(0.0, 1.0, &j, 1.0);
        assert!((v - 2.0 * (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn integrated_variance_edges() {
        let j = JumpPath::empty();
        assert_eq!(integrated_variance(0.7, 1.3, &j, 0.0), 0.0);
        assert!((integrated_variance(0.7, 1.3, &j, 0.8) - 0.7 * epsilon(1.3, 0.8)).abs() < 1e-15);
        let big = integrated_variance(1.0, 1e4, &j, 1.0);
        assert!(big <= 1e-4 && (big - 1e-4 * (1.0 - (-1e4f64).exp())).abs() < 1e-18);
    }

    #[test]
    fn null_kernel_zero_variance_is_deterministic() {
        let m = model(LevyKernel::null());
        let x = evolve_x(&m, 0.2, 0.0, &JumpPath::empty(), 0.7, 1.234);
        assert!((x - (0.2 + 0.03 * 0.7)).abs() < 1e-15);
    }

    #[test]
    fn sweep_agrees_with_closed_forms() {
        let m = model(LevyKernel::gamma_ou(3.0, 2.0).unwrap());
        let times: Vec<f64> = (1..=50).map(|k| k as f64 / 50.0).collect();
        let p = simulate_path(&m, 0.0, 0.3, &times, &mut path_rng(5, 9));
        assert!(!p.jumps.times.is_empty());
        for (k, &t) in times.iter().enumerate() {
            assert!((p.v[k] - evolve_v(0.3, 1.0, &p.jumps, t)).abs() < 1e-12);
            assert!((p.v_star[k] - integrated_variance(0.3, 1.0, &p.jumps, t)).abs() < 1e-12);
            assert!((p.z_cum[k] - cumulative_z(1.0, &p.jumps, t)).abs() < 1e-12);
        }
    }

    #[test]
    fn ig_truncation_metadata() {
        let m = model(LevyKernel::inverse_gaussian_ou(1.0, 1.0).unwrap());
        let j = simulate_bdlp(&m, 1.0, &mut path_rng(3, 1));
        assert_eq!(j.cutoff, DEFAULT_JUMP_CUTOFF);
        assert!(j.drift > 0.0 && j.drift < 1e-3);
        assert!(j.sizes.iter().all(|&z| z > DEFAULT_JUMP_CUTOFF));
        assert!(j.truncated_second_moment < 1e-9);
    }

    #[test]
    fn unbounded_tilt_cannot_be_simulated() {
        let params = ModelParams::new(1.0, -0.5, 0.0, 1.0).unwrap();
        let k = LevyKernel::gamma_ou(1.0, 2.0).unwrap();
        let jm = JumpMeasure::new(k, EmmTilt::Exponential { beta: -0.5 }).unwrap();
        assert!(BnsModel::new(params, jm).is_err());
    }
}
