//! Obstacle functions `h(x)` of the log-price with Lipschitz constants.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PayoffError {
    #[error("invalid payoff: {0}")]
    Invalid(String),
    #[error("payoff `{0}` is not Lipschitz in the log-price; pass the explicit override to use it")]
    Uncertified(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PayoffKind {
    /// `max(X̃ − e^x, 0)`.
    Put { strike: f64 },
    /// `min(max(e^x − X̃, 0), cap)`.
    CappedCall { strike: f64, cap: f64 },
    /// Piecewise linear through `(x_i, h_i)`, flat outside the table.
    Custom { x: Vec<f64>, h: Vec<f64> },
    /// `max(e^x − X̃, 0)`; unbounded slope, never certified.
    Call { strike: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Payoff {
    kind: PayoffKind,
    lipschitz_k: f64,
}

impl Payoff {
    pub fn put(strike: f64) -> Result<Self, PayoffError> {
        positive("strike", strike)?;
        Ok(Self { kind: PayoffKind::Put { strike }, lipschitz_k: strike })
    }

    pub fn capped_call(strike: f64, cap: f64) -> Result<Self, PayoffError> {
        positive("strike", strike)?;
        positive("cap", cap)?;
        Ok(Self { kind: PayoffKind::CappedCall { strike, cap }, lipschitz_k: strike + cap })
    }

    pub fn custom(x: Vec<f64>, h: Vec<f64>) -> Result<Self, PayoffError> {
        if x.is_empty() || x.len() != h.len() {
            return Err(PayoffError::Invalid("table must be non-empty with matching lengths".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PayoffError::Invalid("x nodes must be strictly increasing".into()));
        }
        if h.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(PayoffError::Invalid("payoff values must be finite and nonnegative".into()));
        }
        let k = x
            .windows(2)
            .zip(h.windows(2))
            .map(|(xs, hs)| ((hs[1] - hs[0]) / (xs[1] - xs[0])).abs())
            .fold(0.0, f64::max);
        Ok(Self { kind: PayoffKind::Custom { x, h }, lipschitz_k: k })
    }

    /// `h ≡ c`.
    pub fn constant(c: f64) -> Result<Self, PayoffError> {
        Self::custom(vec![0.0], vec![c])
    }

    /// The plain call; only available with `allow_uncertified`.
    pub fn call(strike: f64, allow_uncertified: bool) -> Result<Self, PayoffError> {
        positive("strike", strike)?;
        if !allow_uncertified {
            return Err(PayoffError::Uncertified("call"));
        }
        Ok(Self { kind: PayoffKind::Call { strike }, lipschitz_k: f64::INFINITY })
    }

    pub fn kind(&self) -> &PayoffKind {
        &self.kind
    }

    /// Lipschitz constant `K` with `|h(x₁) − h(x₂)| ≤ K |x₁ − x₂|`.
    pub fn lipschitz_k(&self) -> f64 {
        self.lipschitz_k
    }

    pub fn is_certified(&self) -> bool {
        self.lipschitz_k.is_finite()
    }

    pub fn strike(&self) -> Option<f64> {
        match self.kind {
            PayoffKind::Put { strike } | PayoffKind::CappedCall { strike, .. } | PayoffKind::Call { strike } => {
                Some(strike)
            }
            PayoffKind::Custom { .. } => None,
        }
    }

    pub fn is_put(&self) -> bool {
        matches!(self.kind, PayoffKind::Put { .. })
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        match &self.kind {
            PayoffKind::Put { strike } => (strike - x.exp()).max(0.0),
            PayoffKind::CappedCall { strike, cap } => (x.exp() - strike).max(0.0).min(*cap),
            PayoffKind::Call { strike } => (x.exp() - strike).max(0.0),
            PayoffKind::Custom { x: xs, h } => {
                let last = xs.len() - 1;
                if x <= xs[0] {
                    h[0]
                } else if x >= xs[last] {
                    h[last]
                } else {
                    let i = xs.partition_point(|&n| n <= x) - 1;
                    let f = (x - xs[i]) / (xs[i + 1] - xs[i]);
                    h[i] + f * (h[i + 1] - h[i])
                }
            }
        }
    }

    /// Largest `|h(x_i) − h(x_j)| / |x_i − x_j|` over sample pairs with
    /// `0 < |x_i − x_j| ≤ max_gap`.
    pub fn sampled_lipschitz_ratio(&self, xs: &[f64], max_gap: f64) -> f64 {
        let hs: Vec<f64> = xs.iter().map(|&x| self.evaluate(x)).collect();
        let mut worst = 0.0f64;
        for i in 0..xs.len() {
            for j in (i + 1)..xs.len() {
                let dx = (xs[j] - xs[i]).abs();
                if dx > 0.0 && dx <= max_gap {
                    worst = worst.max((hs[j] - hs[i]).abs() / dx);
                }
            }
        }
        worst
    }
}

fn positive(name: &str, v: f64) -> Result<(), PayoffError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(PayoffError::Invalid(format!("{name} must be finite and > 0, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn put_values() {
        assert_eq!(Payoff::put(1.0).unwrap().evaluate(0.0), 0.0);
        assert_eq!(Payoff::put(2.0).unwrap().evaluate(0.0), 1.0);
        assert_eq!(Payoff::put(2.0).unwrap().evaluate(10.0), 0.0);
        assert_eq!(Payoff::put(2.0).unwrap().lipschitz_k(), 2.0);
    }

    #[test]
    fn call_requires_override() {
        assert_eq!(Payoff::call(1.0, false), Err(PayoffError::Uncertified("call")));
        let c = Payoff::call(1.0, true).unwrap();
        assert!(!c.is_certified());
    }

    #[test]
    fn capped_call_and_custom() {
        let c = Payoff::capped_call(1.0, 0.5).unwrap();
        assert_eq!(c.evaluate(5.0), 0.5);
        assert_eq!(c.evaluate(-1.0), 0.0);
        let t = Payoff::custom(vec![-1.0, 0.0, 1.0], vec![1.0, 0.0, 0.5]).unwrap();
        assert_eq!(t.lipschitz_k(), 1.0);
        assert_eq!(t.evaluate(0.5), 0.25);
        assert_eq!(Payoff::constant(1.0).unwrap().evaluate(3.0), 1.0);
        assert!(Payoff::custom(vec![0.0], vec![-1.0]).is_err());
        assert!(Payoff::put(0.0).is_err());
    }

    #[test]
    fn sampled_ratio_within_certified_constant() {
        let xs: Vec<f64> = (0..=400).map(|i| -3.0 + 6.0 * i as f64 / 400.0).collect();
        for p in [
            Payoff::put(1.0).unwrap(),
            Payoff::put(2.5).unwrap(),
            Payoff::capped_call(1.0, 0.7).unwrap(),
            Payoff::custom(vec![-1.0, 0.0, 1.0], vec![1.0, 0.0, 0.5]).unwrap(),
        ] {
            let ratio = p.sampled_lipschitz_ratio(&xs, 1.0);
            assert!(ratio <= p.lipschitz_k() * (1.0 + 1e-12), "{ratio} > {}", p.lipschitz_k());
        }
    }

    proptest! {
        #[test]
        fn put_is_nonnegative_and_lipschitz(strike in 0.1f64..5.0, x1 in -5.0f64..5.0, x2 in -5.0f64..5.0) {
            let p = Payoff::put(strike).unwrap();
            prop_assert!(p.evaluate(x1) >= 0.0);
            prop_assert!((p.evaluate(x1) - p.evaluate(x2)).abs() <= strike * (x1 - x2).abs() * (1.0 + 1e-12) + 1e-15);
        }
    }
}
