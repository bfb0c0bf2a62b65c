use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("theta = {theta} is outside the finite cumulant domain (theta_hat = {theta_hat})")]
    Domain { theta: f64, theta_hat: f64 },
    #[error("quadrature failed to reach relative tolerance {tol:e} (estimate {estimate}, error {error:e})")]
    Integration { tol: f64, estimate: f64, error: f64 },
    #[error("moment order must be at least 1")]
    ZeroMoment,
    #[error("invalid kernel parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid tilt: {0}")]
    InvalidTilt(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(
        "explicit part unstable: dt * (lambda * jump mass) = {measured:.4} exceeds {limit:.4}; use more time steps"
    )]
    Stability { measured: f64, limit: f64 },
    #[error("projected relaxation did not converge in {sweeps} sweeps (residual {residual:e})")]
    NonConvergence { sweeps: usize, residual: f64 },
    #[error("penalty iteration left an obstacle violation of {violation:e} (tolerance {tolerance:e})")]
    PenaltyViolation { violation: f64, tolerance: f64 },
    #[error("surfaces live on different grids")]
    GridMismatch,
    #[error("point ({x}, {v}) lies outside the grid")]
    OutOfRange { x: f64, v: f64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("invalid Monte Carlo setting: {0}")]
    InvalidInput(String),
    #[error("normal equations singular at exercise date {date} even after ridge shift")]
    Regression { date: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("failed to parse config: {0}")]
    Parse(String),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
