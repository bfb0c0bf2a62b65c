//! TOML run configuration for the `bns` binary.
//!
//! Every section rejects unknown keys. Required keys are reported by their
//! dotted name (`kernel.b`) when missing, and every value goes through the
//! same validation as the library constructors.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::dynamics::{BnsModel, ModelParams};
use crate::error::ConfigError;
use crate::kernel::{EmmTilt, JumpMeasure, LevyKernel};
use crate::mc::{BasisSpec, LsmcSettings, McSettings};
use crate::payoff::Payoff;
use crate::solver::{ExerciseMode, Grid, ObstacleMethod, SolverOptions, VInterp};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kernel: Option<RawKernel>,
    model: Option<RawModel>,
    payoff: Option<RawPayoff>,
    grid: Option<RawGrid>,
    mc: Option<RawMc>,
    verify: Option<RawVerify>,
    output: Option<RawOutput>,
    runtime: Option<RawRuntime>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    #[serde(rename = "type")]
    kind: Option<String>,
    a: Option<f64>,
    b: Option<f64>,
    tilt: Option<RawTilt>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTilt {
    #[serde(rename = "type")]
    kind: Option<String>,
    beta: Option<f64>,
    z: Option<Vec<f64>>,
    y: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    lambda: Option<f64>,
    rho: Option<f64>,
    r: Option<f64>,
    horizon: Option<f64>,
    x0: Option<f64>,
    v0: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPayoff {
    #[serde(rename = "type")]
    kind: Option<String>,
    strike: Option<f64>,
    cap: Option<f64>,
    x: Option<Vec<f64>>,
    h: Option<Vec<f64>>,
    allow_uncertified: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    x_min: Option<f64>,
    x_max: Option<f64>,
    n_x: Option<usize>,
    v_min: Option<f64>,
    v_max: Option<f64>,
    n_v: Option<usize>,
    v_ratio: Option<f64>,
    n_t: Option<usize>,
    delta: Option<f64>,
    mode: Option<String>,
    v_interp: Option<String>,
    obstacle: Option<String>,
    penalty_tolerance: Option<f64>,
    rungs: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMc {
    n_paths: Option<usize>,
    seed: Option<u64>,
    control_variate: Option<bool>,
    n_dates: Option<usize>,
    basis: Option<String>,
    n_train: Option<usize>,
    price: Option<bool>,
    path_count: Option<usize>,
    path_times: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    comparison_eps: Option<f64>,
    deltas: Option<Vec<f64>>,
    dpp_eps: Option<f64>,
    dpp_paths: Option<usize>,
    modulus_tolerance: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
    probes: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRuntime {
    threads: Option<usize>,
}

/// Grid recipe; `refined(k)` doubles every resolution `k` times.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub n_v: usize,
    /// Cell-width growth from the bottom; `1` is uniform.
    pub v_ratio: f64,
    pub n_t: usize,
}

impl GridSpec {
    pub fn build(&self, horizon: f64) -> Result<Grid, crate::error::SolverError> {
        self.refined(0, horizon)
    }

    /// Nested refinement: `(n − 1)·2^k + 1` nodes per axis, `n_t·2^k` steps,
    /// growth ratio `q^{1/2^k}`.
    pub fn refined(&self, k: u32, horizon: f64) -> Result<Grid, crate::error::SolverError> {
        let f = 1usize << k;
        let n_x = (self.n_x - 1) * f + 1;
        let n_v = (self.n_v - 1) * f + 1;
        let n_t = self.n_t * f;
        if self.v_ratio == 1.0 {
            Grid::uniform(self.x_min, self.x_max, n_x, self.v_min, self.v_max, n_v, n_t, horizon)
        } else {
            let q = self.v_ratio.powf(1.0 / f as f64);
            Grid::geometric_v(self.x_min, self.x_max, n_x, self.v_min, self.v_max, n_v, q, n_t, horizon)
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifySettings {
    pub comparison_eps: f64,
    pub deltas: Vec<f64>,
    pub dpp_eps: f64,
    pub dpp_paths: usize,
    pub modulus_tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: BnsModel,
    pub payoff: Payoff,
    pub x0: f64,
    pub v0: f64,
    pub grid: GridSpec,
    pub delta: Option<f64>,
    pub solver: SolverOptions,
    pub rungs: usize,
    pub mc: McSettings,
    pub lsmc: LsmcSettings,
    /// Also price the probes by Monte Carlo in `price`.
    pub mc_price: bool,
    pub path_count: usize,
    pub path_times: usize,
    pub verify: VerifySettings,
    pub probes: Vec<(f64, f64)>,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
}

fn req<T>(v: Option<T>, key: &str) -> Result<T, ConfigError> {
    v.ok_or_else(|| ConfigError::Missing(key.to_string()))
}

fn invalid(key: &str, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), reason: reason.to_string() }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::resolve(raw)
    }

    fn resolve(raw: RawConfig) -> Result<Self, ConfigError> {
        let k = req(raw.kernel, "kernel")?;
        let kind = req(k.kind, "kernel.type")?;
        let kernel = match kind.as_str() {
            "gamma_ou" => LevyKernel::gamma_ou(req(k.a, "kernel.a")?, req(k.b, "kernel.b")?),
            "ig_ou" => LevyKernel::inverse_gaussian_ou(req(k.a, "kernel.a")?, req(k.b, "kernel.b")?),
            "null" => Ok(LevyKernel::null()),
            other => return Err(invalid("kernel.type", format!("unknown kernel `{other}`"))),
        }
        .map_err(|e| invalid("kernel", e))?;
        let tilt = match k.tilt {
            None => EmmTilt::Identity,
            Some(t) => match req(t.kind, "kernel.tilt.type")?.as_str() {
                "identity" => EmmTilt::Identity,
                "exponential" => EmmTilt::Exponential { beta: req(t.beta, "kernel.tilt.beta")? },
                "tabulated" => EmmTilt::tabulated(req(t.z, "kernel.tilt.z")?, req(t.y, "kernel.tilt.y")?)
                    .map_err(|e| invalid("kernel.tilt", e))?,
                other => return Err(invalid("kernel.tilt.type", format!("unknown tilt `{other}`"))),
            },
        };
        let jumps = JumpMeasure::new(kernel, tilt).map_err(|e| invalid("kernel.tilt", e))?;

        let m = req(raw.model, "model")?;
        let params = ModelParams::new(
            req(m.lambda, "model.lambda")?,
            req(m.rho, "model.rho")?,
            req(m.r, "model.r")?,
            req(m.horizon, "model.horizon")?,
        )
        .map_err(|e| invalid("model", e))?;
        let model = BnsModel::new(params, jumps).map_err(|e| invalid("model", e))?;
        let x0 = m.x0.unwrap_or(0.0);
        let v0 = req(m.v0, "model.v0")?;
        if !x0.is_finite() {
            return Err(invalid("model.x0", "must be finite"));
        }
        if !(v0.is_finite() && v0 >= 0.0) {
            return Err(invalid("model.v0", "must be >= 0"));
        }

        let p = req(raw.payoff, "payoff")?;
        let payoff = match req(p.kind, "payoff.type")?.as_str() {
            "put" => Payoff::put(req(p.strike, "payoff.strike")?),
            "capped_call" => Payoff::capped_call(req(p.strike, "payoff.strike")?, req(p.cap, "payoff.cap")?),
            "call" => Payoff::call(req(p.strike, "payoff.strike")?, p.allow_uncertified.unwrap_or(false)),
            "custom" => Payoff::custom(req(p.x, "payoff.x")?, req(p.h, "payoff.h")?),
            other => return Err(invalid("payoff.type", format!("unknown payoff `{other}`"))),
        }
        .map_err(|e| invalid("payoff", e))?;

        let g = req(raw.grid, "grid")?;
        let grid = GridSpec {
            x_min: req(g.x_min, "grid.x_min")?,
            x_max: req(g.x_max, "grid.x_max")?,
            n_x: req(g.n_x, "grid.n_x")?,
            v_min: g.v_min.unwrap_or(0.0),
            v_max: req(g.v_max, "grid.v_max")?,
            n_v: req(g.n_v, "grid.n_v")?,
            v_ratio: g.v_ratio.unwrap_or(1.0),
            n_t: req(g.n_t, "grid.n_t")?,
        };
        grid.build(params.horizon).map_err(|e| invalid("grid", e))?;
        let delta = match g.delta {
            Some(d) if d > 0.0 => Some(d),
            Some(0.0) | None => None,
            Some(d) => return Err(invalid("grid.delta", format!("must be >= 0, got {d}"))),
        };
        let mut solver = SolverOptions::default();
        solver.mode = match g.mode.as_deref().unwrap_or("american") {
            "american" => ExerciseMode::American,
            "european" => ExerciseMode::European,
            other => return Err(invalid("grid.mode", format!("expected american or european, got `{other}`"))),
        };
        solver.v_interp = match g.v_interp.as_deref().unwrap_or("linear") {
            "linear" => VInterp::Linear,
            "cubic" => VInterp::Cubic,
            other => return Err(invalid("grid.v_interp", format!("expected linear or cubic, got `{other}`"))),
        };
        solver.obstacle = match g.obstacle.as_deref().unwrap_or("penalty") {
            "penalty" => solver.obstacle,
            "psor" => ObstacleMethod::Psor { omega: 1.2, tol: 1e-10, max_sweeps: 10_000 },
            other => return Err(invalid("grid.obstacle", format!("expected penalty or psor, got `{other}`"))),
        };
        if let Some(t) = g.penalty_tolerance {
            if !(t > 0.0) {
                return Err(invalid("grid.penalty_tolerance", "must be > 0"));
            }
            solver.penalty_tolerance = t;
        }
        let rungs = g.rungs.unwrap_or(3);
        if rungs == 0 {
            return Err(invalid("grid.rungs", "must be >= 1"));
        }

        let mc = raw.mc.unwrap_or_default();
        let basis = match mc.basis.as_deref().unwrap_or("standard") {
            "standard" => BasisSpec::Standard,
            "extended" => BasisSpec::Extended,
            other => return Err(invalid("mc.basis", format!("expected standard or extended, got `{other}`"))),
        };
        let mc_settings = McSettings {
            n_paths: mc.n_paths.unwrap_or(100_000),
            seed: mc.seed.unwrap_or(1),
            control_variate: mc.control_variate.unwrap_or(true),
        };
        if mc_settings.n_paths < 2 {
            return Err(invalid("mc.n_paths", "need at least 2 paths"));
        }
        let lsmc = LsmcSettings { n_dates: mc.n_dates.unwrap_or(50), basis, itm_only: true, n_train: mc.n_train };
        if lsmc.n_dates == 0 {
            return Err(invalid("mc.n_dates", "must be >= 1"));
        }

        let v = raw.verify.unwrap_or_default();
        let verify = VerifySettings {
            comparison_eps: v.comparison_eps.unwrap_or(0.01),
            deltas: v.deltas.unwrap_or_default(),
            dpp_eps: v.dpp_eps.unwrap_or(0.05 * payoff.strike().unwrap_or(1.0)),
            dpp_paths: v.dpp_paths.unwrap_or(100_000),
            modulus_tolerance: v.modulus_tolerance.unwrap_or(0.2),
        };

        let o = raw.output.unwrap_or_default();
        let probes: Vec<(f64, f64)> = match o.probes {
            Some(list) if !list.is_empty() => list.into_iter().map(|[x, v]| (x, v)).collect(),
            Some(_) => return Err(invalid("output.probes", "list is empty")),
            None => vec![(x0, v0)],
        };
        let threads = raw.runtime.and_then(|r| r.threads);
        if threads == Some(0) {
            return Err(invalid("runtime.threads", "must be >= 1"));
        }

        Ok(Self {
            model,
            payoff,
            x0,
            v0,
            grid,
            delta,
            solver,
            rungs,
            mc: mc_settings,
            lsmc,
            mc_price: mc.price.unwrap_or(false),
            path_count: mc.path_count.unwrap_or(100),
            path_times: mc.path_times.unwrap_or(100),
            verify,
            probes,
            out_dir: PathBuf::from(o.dir.unwrap_or_else(|| "out".into())),
            threads,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[kernel]
type = "gamma_ou"
a = 1.0
b = 20.0

[model]
lambda = 1.0
rho = -0.5
r = 0.03
horizon = 1.0
v0 = 0.04

[payoff]
type = "put"
strike = 1.0

[grid]
x_min = -1.0
x_max = 1.0
n_x = 51
v_max = 0.6
n_v = 26
n_t = 50
"#;

    #[test]
    fn parses_minimal_config() {
        let c = RunConfig::from_toml(BASE).unwrap();
        assert_eq!(c.probes, vec![(0.0, 0.04)]);
        assert_eq!(c.grid.build(1.0).unwrap().n_x(), 51);
        assert!(c.delta.is_none());
    }

    #[test]
    fn missing_key_is_named() {
        let text = BASE.replace("b = 20.0\n", "");
        let err = RunConfig::from_toml(&text).unwrap_err();
        assert!(matches!(&err, ConfigError::Missing(k) if k == "kernel.b"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = BASE.replace("b = 20.0\n", "b = 20.0\nc = 1.0\n");
        assert!(matches!(RunConfig::from_toml(&text), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn invalid_values_name_the_section() {
        let text = BASE.replace("rho = -0.5", "rho = 0.5");
        let err = RunConfig::from_toml(&text).unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { key, .. } if key == "model"), "{err}");
    }

    #[test]
    fn refinement_nests() {
        let c = RunConfig::from_toml(&BASE.replace("n_t = 50", "n_t = 50\nv_ratio = 1.1")).unwrap();
        let g0 = c.grid.refined(0, 1.0).unwrap();
        let g1 = c.grid.refined(1, 1.0).unwrap();
        for &v in g0.v() {
            assert!(g1.v_index(v).is_some(), "{v}");
        }
        assert_eq!(g1.n_t(), 100);
    }
}
