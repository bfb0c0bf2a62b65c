//! Jump kernels of the background driving Lévy process (BDLP).
//!
//! The BDLP `Z` is a driftless subordinator with Lévy density `w(z)` on
//! `z > 0`. Two concrete families are provided, plus the null kernel
//! (`Z ≡ 0`) which collapses the model to deterministic variance decay:
//!
//! * Gamma-OU: `w(z) = a b e^{-bz}`, compound Poisson with rate `a` and
//!   exponential jump sizes, `κ(θ) = aθ / (b − θ)`, `θ̂ = b`.
//! * IG-OU: `w(z) = a / (2√(2π)) · z^{-3/2} (1 + b² z) e^{-b² z / 2}`,
//!   infinite activity, `κ(θ) = aθ / √(b² − 2θ)`, `θ̂ = b² / 2`.
//!
//! Every closed form here is cross-checked against the quadrature route of
//! [`tilted_cumulant`] in the tests.

use std::f64::consts::PI;

use num_complex::Complex64;
use statrs::function::gamma::{gamma, gamma_li, gamma_ui, gamma_ur};

use crate::error::KernelError;
use crate::quadrature;

/// Relative tolerance of the quadrature route.
pub const QUAD_REL_TOL: f64 = 1e-10;
/// Truncation budget for the tail beyond the quadrature cut.
pub const QUAD_TAIL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    GammaOU { a: f64, b: f64 },
    InverseGaussianOU { a: f64, b: f64 },
    Null,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevyKernel {
    kind: KernelKind,
    theta_hat: f64,
}

impl LevyKernel {
    pub fn gamma_ou(a: f64, b: f64) -> Result<Self, KernelError> {
        Self::new(KernelKind::GammaOU { a, b })
    }

    pub fn inverse_gaussian_ou(a: f64, b: f64) -> Result<Self, KernelError> {
        Self::new(KernelKind::InverseGaussianOU { a, b })
    }

    pub fn null() -> Self {
        Self { kind: KernelKind::Null, theta_hat: f64::INFINITY }
    }

    pub fn new(kind: KernelKind) -> Result<Self, KernelError> {
        let theta_hat = match kind {
            KernelKind::GammaOU { a, b } | KernelKind::InverseGaussianOU { a, b } => {
                for (name, val) in [("a", a), ("b", b)] {
                    if !(val.is_finite() && val > 0.0) {
                        return Err(KernelError::InvalidParameter(format!("{name} must be finite and > 0, got {val}")));
                    }
                }
                match kind {
                    KernelKind::GammaOU { .. } => b,
                    _ => 0.5 * b * b,
                }
            }
            KernelKind::Null => f64::INFINITY,
        };
        Ok(Self { kind, theta_hat })
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    /// Supremum of the finite domain of the cumulant transform.
    pub fn theta_hat(&self) -> f64 {
        self.theta_hat
    }

    pub fn is_null(&self) -> bool {
        matches!(self.kind, KernelKind::Null)
    }

    /// Whether the Lévy measure has finite total mass.
    pub fn finite_activity(&self) -> bool {
        !matches!(self.kind, KernelKind::InverseGaussianOU { .. })
    }

    /// Lévy density `w(z)`; zero for `z ≤ 0`.
    pub fn density(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        match self.kind {
            KernelKind::GammaOU { a, b } => a * b * (-b * z).exp(),
            KernelKind::InverseGaussianOU { a, b } => {
                let k = ig_prefactor(a);
                k * z.powf(-1.5) * (1.0 + b * b * z) * (-0.5 * b * b * z).exp()
            }
            KernelKind::Null => 0.0,
        }
    }

    /// `κ(θ) = ∫ (e^{θz} − 1) W(dz)` in closed form.
    pub fn cumulant(&self, theta: f64) -> Result<f64, KernelError> {
        if theta >= self.theta_hat {
            return Err(KernelError::Domain { theta, theta_hat: self.theta_hat });
        }
        Ok(match self.kind {
            KernelKind::GammaOU { a, b } => a * theta / (b - theta),
            KernelKind::InverseGaussianOU { a, b } => a * theta / (b * b - 2.0 * theta).sqrt(),
            KernelKind::Null => 0.0,
        })
    }

    /// `κ(θ)` for complex `θ` with `Re θ < θ̂`, on the principal branch.
    pub fn cumulant_complex(&self, theta: Complex64) -> Result<Complex64, KernelError> {
        if theta.re >= self.theta_hat {
            return Err(KernelError::Domain { theta: theta.re, theta_hat: self.theta_hat });
        }
        Ok(match self.kind {
            KernelKind::GammaOU { a, b } => a * theta / (b - theta),
            KernelKind::InverseGaussianOU { a, b } => a * theta / (b * b - 2.0 * theta).sqrt(),
            KernelKind::Null => Complex64::new(0.0, 0.0),
        })
    }

    /// `μ_n = ∫ zⁿ W(dz)`, `n ≥ 1`.
    pub fn moment(&self, n: u32) -> Result<f64, KernelError> {
        if n == 0 {
            return Err(KernelError::ZeroMoment);
        }
        Ok(match self.kind {
            KernelKind::GammaOU { a, b } => a * factorial(n) / b.powi(n as i32),
            KernelKind::InverseGaussianOU { a, b } => {
                let c = 0.5 * b * b;
                let s = n as f64;
                ig_prefactor(a) * (gamma(s - 0.5) / c.powf(s - 0.5) + b * b * gamma(s + 0.5) / c.powf(s + 0.5))
            }
            KernelKind::Null => 0.0,
        })
    }

    /// `∫_lo^hi zⁿ W(dz)` in closed form (`hi` may be infinite).
    ///
    /// `n = 0` with `lo = 0` is infinite for the IG kernel.
    pub fn partial_moment(&self, n: u32, lo: f64, hi: f64) -> f64 {
        let lo = lo.max(0.0);
        if hi <= lo {
            return 0.0;
        }
        match self.kind {
            KernelKind::GammaOU { a, b } => {
                let s = n as f64 + 1.0;
                a * b.powi(-(n as i32)) * inc_gamma_between(s, b * lo, b * hi)
            }
            KernelKind::InverseGaussianOU { a, b } => {
                let c = 0.5 * b * b;
                let s = n as f64;
                ig_prefactor(a)
                    * (c.powf(-(s - 0.5)) * inc_gamma_between(s - 0.5, c * lo, c * hi)
                        + b * b * c.powf(-(s + 0.5)) * inc_gamma_between(s + 0.5, c * lo, c * hi))
            }
            KernelKind::Null => 0.0,
        }
    }

    /// `∫_{z_max}^∞ (1 + z) W(dz)`, the mass dropped by truncating large jumps.
    pub fn tail_mass(&self, z_max: f64) -> f64 {
        self.partial_moment(0, z_max, f64::INFINITY) + self.partial_moment(1, z_max, f64::INFINITY)
    }

    /// Smallest `z_max` (to a relative 1e-3) with `tail_mass(z_max) < tol`.
    pub fn truncation_point(&self, tol: f64) -> f64 {
        if self.is_null() {
            return 0.0;
        }
        let mut hi = 1.0;
        while self.tail_mass(hi) >= tol {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        while hi - lo > 1e-3 * hi {
            let mid = 0.5 * (lo + hi);
            if self.tail_mass(mid) >= tol {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// Upper bound on the `q`-quantile of `Z_s` (`s = λT` for `Z_{λT}`).
    ///
    /// Exact (by bisection on the compound-Poisson law) for Gamma-OU; a
    /// Chernoff bound `inf_θ (sκ(θ) − ln(1 − q)) / θ` for IG-OU.
    pub fn quantile_upper(&self, s: f64, q: f64) -> f64 {
        match self.kind {
            KernelKind::Null => 0.0,
            KernelKind::GammaOU { a, b } => {
                let tail = |z: f64| compound_poisson_exp_tail(a * s, b, z);
                let target = 1.0 - q;
                if tail(0.0) <= target {
                    return 0.0;
                }
                let mut hi = 1.0 / b;
                while tail(hi) > target {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if tail(mid) > target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            }
            KernelKind::InverseGaussianOU { .. } => {
                let log_tail = -(1.0 - q).ln();
                let bound = |u: f64| {
                    let theta = self.theta_hat * u;
                    (s * self.cumulant(theta).unwrap_or(f64::INFINITY) + log_tail) / theta
                };
                // Golden-section search on the fraction of θ̂.
                let g = 0.5 * (5f64.sqrt() - 1.0);
                let (mut a, mut b) = (1e-9, 1.0 - 1e-12);
                let mut c = b - g * (b - a);
                let mut d = a + g * (b - a);
                for _ in 0..200 {
                    if bound(c) < bound(d) {
                        b = d;
                    } else {
                        a = c;
                    }
                    c = b - g * (b - a);
                    d = a + g * (b - a);
                }
                bound(0.5 * (a + b))
            }
        }
    }

    /// Checks that `κ` has a nonempty domain `θ < θ̂` and blows up at its
    /// edge, with the default probe settings.
    pub fn validate_conditions(&self) -> ConditionReport {
        self.validate_conditions_with(&ProbeSettings::default())
    }

    pub fn validate_conditions_with(&self, probe: &ProbeSettings) -> ConditionReport {
        let finite_domain = self.theta_hat > 0.0;
        let mut values = Vec::new();
        let mut steep = false;
        if self.theta_hat.is_finite() && !self.is_null() {
            let mut increasing = true;
            for k in 1..=probe.max_probes {
                let theta = self.theta_hat * (1.0 - 0.5f64.powi(k as i32));
                let Ok(kappa) = self.cumulant(theta) else {
                    increasing = false;
                    break;
                };
                if let Some(&(_, prev)) = values.last() {
                    increasing &= kappa > prev;
                }
                values.push((theta, kappa));
                if k >= probe.min_probes && kappa > probe.threshold {
                    break;
                }
            }
            steep = increasing && values.last().is_some_and(|&(_, k)| k > probe.threshold);
        }
        ConditionReport { theta_hat: self.theta_hat, finite_domain, steep, probes: values }
    }
}

/// Probe schedule for steepness: `θ_k = θ̂ (1 − 2^{-k})`.
#[derive(Debug, Clone, Copy)]
pub struct ProbeSettings {
    pub min_probes: u32,
    pub max_probes: u32,
    pub threshold: f64,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self { min_probes: 20, max_probes: 50, threshold: 1e6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub theta_hat: f64,
    pub finite_domain: bool,
    pub steep: bool,
    /// `(θ_k, κ(θ_k))` along the probe sequence.
    pub probes: Vec<(f64, f64)>,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.finite_domain && self.steep
    }
}

/// Static multiplier `y(z)` of the structure-preserving measure change;
/// the tilted Lévy density is `y(z) w(z)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum EmmTilt {
    #[default]
    Identity,
    /// `y(z) = e^{-βz}`.
    Exponential { beta: f64 },
    /// Piecewise-linear through `(z_i, y_i)`, flat beyond the end nodes.
    Tabulated { z: Vec<f64>, y: Vec<f64> },
}

impl EmmTilt {
    pub fn tabulated(z: Vec<f64>, y: Vec<f64>) -> Result<Self, KernelError> {
        if z.len() != y.len() || z.is_empty() {
            return Err(KernelError::InvalidTilt("z and y must be non-empty and of equal length".into()));
        }
        if z.windows(2).any(|w| w[1] <= w[0]) {
            return Err(KernelError::InvalidTilt("z nodes must be strictly increasing".into()));
        }
        if y.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(KernelError::InvalidTilt("y must be finite and nonnegative".into()));
        }
        Ok(Self::Tabulated { z, y })
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, EmmTilt::Identity)
    }

    pub fn multiplier(&self, z: f64) -> f64 {
        match self {
            EmmTilt::Identity => 1.0,
            EmmTilt::Exponential { beta } => (-beta * z).exp(),
            EmmTilt::Tabulated { z: zs, y } => {
                if z <= zs[0] {
                    return y[0];
                }
                let last = zs.len() - 1;
                if z >= zs[last] {
                    return y[last];
                }
                let i = zs.partition_point(|&n| n <= z) - 1;
                let f = (z - zs[i]) / (zs[i + 1] - zs[i]);
                y[i] + f * (y[i + 1] - y[i])
            }
        }
    }

    /// `θ̂` of the tilted kernel.
    pub fn tilted_theta_hat(&self, kernel: &LevyKernel) -> f64 {
        match self {
            EmmTilt::Exponential { beta } => kernel.theta_hat() + beta,
            _ => kernel.theta_hat(),
        }
    }

    /// `∫ (√y − 1)² w dz`; finite iff the tilt belongs to the admissible set.
    pub fn hellinger_integral(&self, kernel: &LevyKernel) -> Result<f64, KernelError> {
        if self.is_identity() || kernel.is_null() {
            return Ok(0.0);
        }
        if let EmmTilt::Exponential { beta } = self {
            // e^{-βz} w must remain integrable at infinity.
            if self.tilted_theta_hat(kernel) <= 0.0 {
                return Err(KernelError::InvalidTilt(format!("beta = {beta} makes the tilted density non-integrable")));
            }
        }
        let (decay, sup) = self.tail_envelope(kernel);
        let cut = tail_cut(kernel, decay, sup.max(1.0), 0.0, QUAD_TAIL_TOL);
        let f = |z: f64| {
            let d = self.multiplier(z).sqrt() - 1.0;
            d * d * kernel.density(z)
        };
        Ok(quadrature::integrate(f, 0.0, cut, QUAD_REL_TOL, 1e-300)?.value)
    }

    /// `(decay rate, sup y)` such that `y(z) w(z) ≤ C sup e^{-decay z}` for large `z`.
    fn tail_envelope(&self, kernel: &LevyKernel) -> (f64, f64) {
        let base = kernel.theta_hat();
        match self {
            EmmTilt::Identity => (base, 1.0),
            EmmTilt::Exponential { beta } => (base + beta, 1.0),
            EmmTilt::Tabulated { y, .. } => (base, y.iter().cloned().fold(0.0, f64::max)),
        }
    }
}

/// Jump law of `Z` under the pricing measure: kernel `w` and tilt `y`
/// combined into the density `y(z) w(z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpMeasure {
    pub kernel: LevyKernel,
    pub tilt: EmmTilt,
}

impl JumpMeasure {
    pub fn new(kernel: LevyKernel, tilt: EmmTilt) -> Result<Self, KernelError> {
        if tilt.tilted_theta_hat(&kernel) <= 0.0 {
            return Err(KernelError::InvalidTilt("tilted cumulant domain must contain a positive theta".into()));
        }
        if !tilt.hellinger_integral(&kernel)?.is_finite() {
            return Err(KernelError::InvalidTilt("tilt violates the Hellinger integrability condition".into()));
        }
        Ok(Self { kernel, tilt })
    }

    pub fn untilted(kernel: LevyKernel) -> Self {
        Self { kernel, tilt: EmmTilt::Identity }
    }

    pub fn is_null(&self) -> bool {
        self.kernel.is_null()
    }

    pub fn theta_hat(&self) -> f64 {
        self.tilt.tilted_theta_hat(&self.kernel)
    }

    pub fn density(&self, z: f64) -> f64 {
        self.tilt.multiplier(z) * self.kernel.density(z)
    }

    pub fn cumulant(&self, theta: f64) -> Result<f64, KernelError> {
        tilted_cumulant(&self.kernel, &self.tilt, theta)
    }

    /// Complex-argument cumulant; quadrature on the real and imaginary
    /// parts when tilted.
    pub fn cumulant_complex(&self, theta: Complex64) -> Result<Complex64, KernelError> {
        if self.tilt.is_identity() || self.is_null() {
            return self.kernel.cumulant_complex(theta);
        }
        let theta_hat = self.theta_hat();
        if theta.re >= theta_hat {
            return Err(KernelError::Domain { theta: theta.re, theta_hat });
        }
        let (decay, sup) = self.tilt.tail_envelope(&self.kernel);
        let cut = tail_cut(&self.kernel, decay, sup, theta.re.max(0.0), QUAD_TAIL_TOL);
        let part = |f: &dyn Fn(Complex64) -> f64| -> Result<f64, KernelError> {
            let g = |z: f64| f((theta * z).exp() - 1.0) * self.density(z);
            Ok(quadrature::integrate(g, 0.0, cut, QUAD_REL_TOL, 1e-13)?.value)
        };
        Ok(Complex64::new(part(&|c| c.re)?, part(&|c| c.im)?))
    }

    pub fn moment(&self, n: u32) -> Result<f64, KernelError> {
        if self.tilt.is_identity() {
            return self.kernel.moment(n);
        }
        if n == 0 {
            return Err(KernelError::ZeroMoment);
        }
        self.partial_moment(n, 0.0, f64::INFINITY)
    }

    /// `∫_lo^hi zⁿ y(z) w(z) dz`.
    pub fn partial_moment(&self, n: u32, lo: f64, hi: f64) -> Result<f64, KernelError> {
        if self.tilt.is_identity() || self.is_null() {
            return Ok(self.kernel.partial_moment(n, lo, hi));
        }
        let lo = lo.max(0.0);
        let (decay, sup) = self.tilt.tail_envelope(&self.kernel);
        let hi = hi.min(tail_cut(&self.kernel, decay, sup, 0.0, QUAD_TAIL_TOL).max(lo));
        if hi <= lo {
            return Ok(0.0);
        }
        let f = |z: f64| z.powi(n as i32) * self.density(z);
        Ok(quadrature::integrate(f, lo, hi, QUAD_REL_TOL, 1e-300)?.value)
    }

    pub fn tail_mass(&self, z_max: f64) -> Result<f64, KernelError> {
        if self.tilt.is_identity() {
            return Ok(self.kernel.tail_mass(z_max));
        }
        Ok(self.partial_moment(0, z_max, f64::INFINITY)? + self.partial_moment(1, z_max, f64::INFINITY)?)
    }

    /// Smallest `z_max` with `tail_mass(z_max) < tol` (to a relative 1e-3).
    pub fn truncation_point(&self, tol: f64) -> Result<f64, KernelError> {
        if self.tilt.is_identity() || self.is_null() {
            return Ok(self.kernel.truncation_point(tol));
        }
        let mut hi = 1.0;
        while self.tail_mass(hi)? >= tol {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        while hi - lo > 1e-3 * hi {
            let mid = 0.5 * (lo + hi);
            if self.tail_mass(mid)? >= tol {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }

    /// Upper bound on the upper `q`-quantile of `Z_s` under this measure.
    pub fn quantile_upper(&self, s: f64, q: f64) -> f64 {
        if self.tilt.is_identity() {
            return self.kernel.quantile_upper(s, q);
        }
        let log_tail = -(1.0 - q).ln();
        let theta_hat = self.theta_hat();
        (1..200)
            .map(|k| theta_hat * k as f64 / 200.0)
            .filter_map(|theta| self.cumulant(theta).ok().map(|c| (s * c + log_tail) / theta))
            .fold(f64::INFINITY, f64::min)
    }

    /// Upper bound of `y` used to thin a proposal drawn from `w`.
    pub fn thinning_bound(&self) -> Option<f64> {
        match &self.tilt {
            EmmTilt::Identity => Some(1.0),
            EmmTilt::Exponential { beta } if *beta >= 0.0 => Some(1.0),
            EmmTilt::Exponential { .. } => None,
            EmmTilt::Tabulated { y, .. } => Some(y.iter().cloned().fold(0.0, f64::max)),
        }
    }
}

/// `κ^y(θ) = ∫ (e^{θz} − 1) y(z) w(z) dz`.
///
/// Closed form for the identity tilt, adaptive quadrature otherwise.
pub fn tilted_cumulant(kernel: &LevyKernel, tilt: &EmmTilt, theta: f64) -> Result<f64, KernelError> {
    if tilt.is_identity() {
        return kernel.cumulant(theta);
    }
    let theta_hat = tilt.tilted_theta_hat(kernel);
    if theta >= theta_hat {
        return Err(KernelError::Domain { theta, theta_hat });
    }
    if kernel.is_null() {
        return Ok(0.0);
    }
    let (decay, sup) = tilt.tail_envelope(kernel);
    let cut = tail_cut(kernel, decay, sup, theta.max(0.0), QUAD_TAIL_TOL);
    quadrature_cumulant(kernel, |z| tilt.multiplier(z), theta, cut)
}

/// Quadrature route for `∫_0^cut (e^{θz} − 1) y(z) w(z) dz`.
pub fn quadrature_cumulant<Y>(kernel: &LevyKernel, y: Y, theta: f64, cut: f64) -> Result<f64, KernelError>
where
    Y: Fn(f64) -> f64,
{
    let f = |z: f64| (theta * z).exp_m1() * y(z) * kernel.density(z);
    Ok(quadrature::integrate(f, 0.0, cut, QUAD_REL_TOL, 1e-300)?.value)
}

/// Cut point `Z` beyond which the integrand's tail is below `tol`, using the
/// envelope `w(z) ≤ C e^{-decay z}` valid for `z ≥ 1`.
pub fn tail_cut(kernel: &LevyKernel, decay: f64, sup: f64, growth: f64, tol: f64) -> f64 {
    let rate = decay - growth;
    let c = match kernel.kind() {
        KernelKind::GammaOU { a, b } => a * b,
        KernelKind::InverseGaussianOU { a, b } => ig_prefactor(a) * (1.0 + b * b),
        KernelKind::Null => return 1.0,
    } * sup.max(f64::MIN_POSITIVE);
    let z = ((c / (tol * rate)).ln() / rate).max(1.0);
    z * 1.05
}

fn ig_prefactor(a: f64) -> f64 {
    a / (2.0 * (2.0 * PI).sqrt())
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `∫_{x_lo}^{x_hi} t^{s−1} e^{−t} dt` for `s > 0` or `s = −1/2` (then `x_lo > 0`).
fn inc_gamma_between(s: f64, x_lo: f64, x_hi: f64) -> f64 {
    if s < 0.0 {
        // Γ(−½, x) = 2 (x^{−½} e^{−x} − Γ(½, x))
        let upper = |x: f64| {
            if x.is_infinite() {
                0.0
            } else if x <= 0.0 {
                f64::INFINITY
            } else {
                2.0 * (x.powf(-0.5) * (-x).exp() - upper_gamma(0.5, x))
            }
        };
        return upper(x_lo) - upper(x_hi);
    }
    if x_lo >= s {
        upper_gamma(s, x_lo) - upper_gamma(s, x_hi)
    } else {
        lower_gamma(s, x_hi) - lower_gamma(s, x_lo)
    }
}

fn upper_gamma(s: f64, x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else if x <= 0.0 {
        gamma(s)
    } else {
        gamma_ui(s, x)
    }
}

fn lower_gamma(s: f64, x: f64) -> f64 {
    if x.is_infinite() {
        gamma(s)
    } else if x <= 0.0 {
        0.0
    } else {
        gamma_li(s, x)
    }
}

/// `P(Σ_{i ≤ N} E_i > z)` with `N ~ Poisson(mean)`, `E_i ~ Exp(rate)`.
fn compound_poisson_exp_tail(mean: f64, rate: f64, z: f64) -> f64 {
    if z < 0.0 {
        return 1.0;
    }
    if z == 0.0 {
        return -(-mean).exp_m1();
    }
    let mut p_n = (-mean).exp();
    let mut total = 0.0;
    let mut n = 0u32;
    loop {
        n += 1;
        p_n *= mean / n as f64;
        let term = p_n * gamma_ur(n as f64, rate * z);
        total += term;
        if n as f64 > mean && p_n < 1e-18 {
            break;
        }
        if n > 10_000 {
            break;
        }
    }
    total
}
