//! TOML configuration. Every key is optional; missing keys take the defaults below.
//!
//! ```toml
//! seed = 0
//!
//! [gripper]
//! max_width = 0.085
//! finger_length = 0.06
//! finger_thickness = 0.01
//! depth_levels = [0.01, 0.02, 0.03, 0.04]
//! collision_margin = 0.001
//!
//! [grid]
//! num_seeds = 256
//! num_views = 300
//! num_angles = 12
//! self_collision = true
//!
//! [surface]
//! density = 250000.0     # samples per m²
//! max_samples = 100000
//!
//! [metric]
//! k = 10
//! friction_bins = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
//! [metric.weights]
//! lambda_t = 0.7
//! lambda_f = 0.2
//! lambda_g = 0.05
//! lambda_c = 0.05
//!
//! [nms]
//! trans_thresh = 0.03
//! rot_thresh_deg = 30.0
//!
//! [eval]
//! top_k = 50
//! thresholds = [0.0, 0.1, 0.3, 0.5, 0.7, 0.9]
//!
//! [table]
//! margin = 0.1
//! spacing = 0.005
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::GridParams;
use crate::eval::{EvalParams, NmsParams};
use crate::gripper::GripperModel;
use crate::mesh::SamplingParams;
use crate::metrics::MetricParams;
use crate::scene::TableParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("ParseError: cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("ParseError: config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceParams {
    pub density: f64,
    pub max_samples: usize,
}

impl Default for SurfaceParams {
    fn default() -> Self {
        let s = SamplingParams::default();
        Self { density: s.density, max_samples: s.max_samples }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub gripper: GripperModel,
    pub grid: GridParams,
    pub surface: SurfaceParams,
    pub metric: MetricParams,
    pub nms: NmsParams,
    pub eval: EvalParams,
    pub table: TableParams,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        self.gripper.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.metric.weights.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.metric.k == 0 {
            return invalid("metric.k must be at least 1".into());
        }
        let g = &self.grid;
        if g.num_seeds == 0 || g.num_views == 0 || g.num_angles == 0 {
            return invalid("grid sizes must be at least 1".into());
        }
        if !(self.surface.density > 0.0 && self.surface.density.is_finite()) || self.surface.max_samples == 0 {
            return invalid("surface density and max_samples must be positive".into());
        }
        if !(self.nms.trans_thresh >= 0.0 && self.nms.rot_thresh_deg >= 0.0) {
            return invalid("nms thresholds must be non-negative".into());
        }
        if self.eval.top_k == 0 || self.eval.thresholds.iter().any(|t| !t.is_finite()) {
            return invalid("eval.top_k must be positive and thresholds finite".into());
        }
        if !(self.table.spacing > 0.0 && self.table.margin >= 0.0) {
            return invalid("table spacing must be positive".into());
        }
        Ok(())
    }

    pub fn sampling(&self) -> SamplingParams {
        SamplingParams { density: self.surface.density, max_samples: self.surface.max_samples, seed: self.seed }
    }
}
