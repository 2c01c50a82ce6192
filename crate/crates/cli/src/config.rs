//! Scenario configuration files.
//!
//! A config is a JSON object with an optional `seed`, an optional
//! `output_dir` and a `scenario` object holding exactly one of the keys
//! `simulate`, `calibrate`, `kfp`, `policy`, `feedback` or `spatial`.

use std::path::PathBuf;

use fishquota::calibrate::{
    CalibrationMethod, CalibrationSetup, CoefficientVector, LeastSquaresConfig, RegressorConfig,
    RootOptions,
};
use fishquota::grid::Grid2D;
use fishquota::kfp::OptimizeOptions;
use fishquota::neural::PolicyTrainConfig;
use fishquota::sde::{ModelParams, QuotaPolicy, QvMode};
use fishquota::spatial::SpatialConfig;
use fishquota::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    Simulate(SimulateConfig),
    Calibrate(CalibrateConfig),
    Kfp(KfpConfig),
    Policy(PolicyConfig),
    Feedback(FeedbackConfig),
    Spatial(SpatialConfig),
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Simulate(_) => "simulate",
            Self::Calibrate(_) => "calibrate",
            Self::Kfp(_) => "kfp",
            Self::Policy(_) => "policy",
            Self::Feedback(_) => "feedback",
            Self::Spatial(_) => "spatial",
        }
    }
}

/// Monte-Carlo paths under a fixed policy.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: ModelParams,
    pub policy: QuotaPolicy,
    pub dt: f64,
    pub n_paths: usize,
    /// Paths written out as trajectory CSVs; the cost uses all of them.
    #[serde(default = "default_written")]
    pub write_paths: usize,
    #[serde(default)]
    pub qv: QvMode,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    #[serde(default = "CalibrationSetup::reference")]
    pub setup: CalibrationSetup,
    /// Coefficients that generate the synthetic observations.
    pub truth: CoefficientVector,
    /// Observation noise.
    pub sigma: f64,
    /// Observation samples; the root method uses only the first.
    #[serde(default = "one")]
    pub samples: usize,
    pub method: CalibrateMethod,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CalibrateMethod {
    Root {
        start: CoefficientVector,
        #[serde(default)]
        options: RootOptions,
    },
    LeastSquares(LeastSquaresConfig),
    Regressor(RegressorConfig),
}

impl CalibrateMethod {
    pub fn sample_method(&self) -> Option<CalibrationMethod> {
        match self {
            Self::Root { .. } => None,
            Self::LeastSquares(c) => Some(CalibrationMethod::LeastSquares(*c)),
            Self::Regressor(c) => Some(CalibrationMethod::Regressor(c.clone())),
        }
    }
}

/// Projected gradient descent on a nodal quota, starting from a constant.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KfpConfig {
    pub model: ModelParams,
    pub grid: Grid2D,
    pub u0: Vec<f64>,
    #[serde(default)]
    pub options: OptimizeOptions,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub model: ModelParams,
    #[serde(default)]
    pub train: PolicyTrainConfig,
    /// Fresh paths used to compare the trained policy with the box-edge constants.
    pub eval_paths: usize,
    /// Grid on which the trained quota is dumped.
    pub grid: Grid2D,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackConfig {
    pub model: ModelParams,
    pub omega: f64,
    /// Starting quota; the middle of the box when absent.
    #[serde(default)]
    pub u0: Option<Vec<f64>>,
    pub dt: f64,
    pub n_paths: usize,
    #[serde(default = "default_written")]
    pub write_paths: usize,
    /// Time-std of the biomass is measured over `[window_start, T]`.
    #[serde(default = "default_window")]
    pub window_start: f64,
}

fn default_window() -> f64 {
    0.5
}

fn default_written() -> usize {
    10
}

fn one() -> usize {
    1
}

fn positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{what} must be positive, got {v}"
        )))
    }
}

fn nonzero(what: &str, n: usize) -> Result<()> {
    if n > 0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} must be at least 1")))
    }
}

impl Scenario {
    /// Check every numeric field against the invariants of its module.
    /// The error message is prefixed with the field path.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let at =
            |path: &'static str| move |e: Error| format!("scenario.{}.{path}: {e}", self.name());
        match self {
            Self::Simulate(c) => {
                c.model.validate().map_err(at("model"))?;
                c.policy.validate(c.model.dim()).map_err(at("policy"))?;
                positive("dt", c.dt).map_err(at("dt"))?;
                nonzero("n_paths", c.n_paths).map_err(at("n_paths"))?;
            }
            Self::Calibrate(c) => {
                c.setup.validate().map_err(at("setup"))?;
                c.truth.validate().map_err(at("truth"))?;
                if !(c.sigma >= 0.0 && c.sigma.is_finite()) {
                    return Err(format!(
                        "scenario.calibrate.sigma: must be non-negative, got {}",
                        c.sigma
                    ));
                }
                nonzero("samples", c.samples).map_err(at("samples"))?;
                match &c.method {
                    CalibrateMethod::Root { start, .. } => {
                        start.validate().map_err(at("method.start"))?
                    }
                    CalibrateMethod::LeastSquares(ls) => {
                        ls.start.validate().map_err(at("method.start"))?
                    }
                    CalibrateMethod::Regressor(rc) => {
                        rc.z_ref.validate().map_err(at("method.z_ref"))?;
                        rc.train.validate().map_err(at("method.train"))?;
                        nonzero("m", rc.m).map_err(at("method.m"))?;
                    }
                }
            }
            Self::Kfp(c) => {
                c.model.validate().map_err(at("model"))?;
                c.grid.validate().map_err(at("grid"))?;
                if c.u0.len() != c.model.dim() {
                    return Err(format!(
                        "scenario.kfp.u0: expected {} components, got {}",
                        c.model.dim(),
                        c.u0.len()
                    ));
                }
                positive("dt", c.options.dt).map_err(at("options.dt"))?;
            }
            Self::Policy(c) => {
                c.model.validate().map_err(at("model"))?;
                c.train.train.validate().map_err(at("train.train"))?;
                positive("dt", c.train.dt).map_err(at("train.dt"))?;
                nonzero("eval_paths", c.eval_paths).map_err(at("eval_paths"))?;
                c.grid.validate().map_err(at("grid"))?;
                if c.model.dim() != 2 {
                    return Err("scenario.policy.model: quota dumps need two species".into());
                }
            }
            Self::Feedback(c) => {
                c.model.validate().map_err(at("model"))?;
                if !c.omega.is_finite() {
                    return Err("scenario.feedback.omega: must be finite".into());
                }
                if let Some(u0) = &c.u0 {
                    if u0.len() != c.model.dim() {
                        return Err(format!(
                            "scenario.feedback.u0: expected {} components, got {}",
                            c.model.dim(),
                            u0.len()
                        ));
                    }
                }
                positive("dt", c.dt).map_err(at("dt"))?;
                nonzero("n_paths", c.n_paths).map_err(at("n_paths"))?;
                if !(c.window_start >= 0.0 && c.window_start < c.model.horizon) {
                    return Err(format!(
                        "scenario.feedback.window_start: must lie in [0, horizon), got {}",
                        c.window_start
                    ));
                }
            }
            Self::Spatial(c) => {
                c.params.validate().map_err(at("params"))?;
                c.fleet.validate().map_err(at("fleet"))?;
                fishquota::spatial::Mesh::from_config(&c.mesh).map_err(at("mesh"))?;
                if let Some(t) = c
                    .snapshot_times
                    .iter()
                    .find(|t| !(**t >= 0.0 && **t <= c.params.horizon))
                {
                    return Err(format!(
                        "scenario.spatial.snapshot_times: {t} lies outside [0, horizon]"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Parse a config, reporting the JSON path of the first offending field.
pub fn parse(text: &str) -> std::result::Result<Config, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            e.inner().to_string()
        } else {
            format!("{path}: {}", e.inner())
        }
    })
}
