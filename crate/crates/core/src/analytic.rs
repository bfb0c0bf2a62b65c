//! Closed-form and transform reference prices.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dynamics::{epsilon, BnsModel};
use crate::error::KernelError;
use crate::quadrature;

fn std_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// European put on `S = e^x` with strike `strike`, rate `r`, maturity `t`
/// and total log-variance `w` over `[0, t]`.
///
/// With the null kernel the variance is deterministic and
/// `w = v₀ ε(T)`, so this is the exact model price.
pub fn black_scholes_put(x0: f64, strike: f64, r: f64, t: f64, w: f64) -> f64 {
    let s = x0.exp();
    let df = (-r * t).exp();
    if w <= 0.0 {
        return (strike * df - s).max(0.0);
    }
    let sd = w.sqrt();
    let d1 = ((s / strike).ln() + r * t + 0.5 * w) / sd;
    let d2 = d1 - sd;
    strike * df * std_normal_cdf(-d2) - s * std_normal_cdf(-d1)
}

/// `E[e^{iu(X_T − x₀)}]` under the pricing dynamics, for complex `u`.
///
/// Conditioning on `Z` leaves a Gaussian in `B`, so
/// `log φ(u) = iu(r − λκ(ρ))T − ½(u² + iu)ε(T)v₀ + λ ∫₀ᵀ κ(iuρ − ½(u² + iu)ε(T − s)) ds`.
pub fn bns_log_price_cf(model: &BnsModel, v0: f64, u: Complex64) -> Result<Complex64, KernelError> {
    let p = model.params;
    let i = Complex64::new(0.0, 1.0);
    let t = p.horizon;
    let q = 0.5 * (u * u + i * u);
    let mut log_phi = i * u * (p.r - p.lambda * model.kappa_rho()) * t - q * epsilon(p.lambda, t) * v0;
    if !model.jumps.is_null() {
        let f = |s: f64| i * u * p.rho - q * epsilon(p.lambda, t - s);
        let part = |take: fn(Complex64) -> f64| -> Result<f64, KernelError> {
            let err = RefCell::new(None);
            let g = |s: f64| match model.jumps.cumulant_complex(f(s)) {
                Ok(k) => take(k),
                Err(e) => {
                    err.borrow_mut().get_or_insert(e);
                    0.0
                }
            };
            let value = quadrature::integrate(g, 0.0, t, 1e-11, 1e-13)?.value;
            err.into_inner().map_or(Ok(value), Err)
        };
        log_phi += p.lambda * Complex64::new(part(|c| c.re)?, part(|c| c.im)?);
    }
    Ok(log_phi.exp())
}

/// European put by the Lewis transform
/// `P = K e^{−rT} − √(S₀K) e^{−rT}/π ∫₀^∞ Re[e^{iuk} φ(u − i/2)] / (u² + ¼) du`,
/// `k = log(S₀/K)`. Needs `v₀ > 0` for the integrand to decay.
pub fn bns_european_put(model: &BnsModel, x0: f64, v0: f64, strike: f64) -> Result<f64, KernelError> {
    if !(v0 > 0.0 && v0.is_finite()) {
        return Err(KernelError::InvalidParameter(format!("transform price needs v0 > 0, got {v0}")));
    }
    if !(strike > 0.0 && strike.is_finite()) {
        return Err(KernelError::InvalidParameter(format!("strike must be > 0, got {strike}")));
    }
    let p = model.params;
    let t = p.horizon;
    let k = x0 - strike.ln();
    let w = epsilon(p.lambda, t) * v0;
    // |φ(u − i/2)| ≤ e^{−½(u² + ¼)w + λT κ(ρ⁺/2)}.
    let lift = if model.jumps.is_null() { 0.0 } else { p.lambda * t * model.jumps.cumulant(0.5 * p.rho.max(0.0))? };
    let u_max = (2.0 * (40.0 + lift.max(0.0)) / w).sqrt();
    let half = Complex64::new(0.0, 0.5);
    let err = RefCell::new(None);
    let g = |u: f64| match bns_log_price_cf(model, v0, u - half) {
        Ok(phi) => (Complex64::new(0.0, u * k).exp() * phi).re / (u * u + 0.25),
        Err(e) => {
            err.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    let integral = quadrature::integrate(g, 0.0, u_max, 1e-10, 1e-13)?.value;
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    let df = (-p.r * t).exp();
    Ok(strike * df - (x0.exp() * strike).sqrt() * df / PI * integral)
}
