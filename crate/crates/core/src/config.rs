//! The experiment configuration document.
//!
//! Every section has defaults, unknown keys are rejected, and
//! [`ExperimentConfig::resolved`] gives the fully expanded document that
//! output manifests echo.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{AreaWeighting, SpectralWindow};
use crate::model::ModelConfig;
use crate::rollout::ForcingKind;
use crate::synthetic::GeneratorConfig;
use crate::training::TrainConfig;

/// Which days of a dataset serve which purpose (inclusive ranges).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset directory written by `gen-data`, relative to the config file.
    pub dataset: PathBuf,
    /// Training, normalization and climatology period.
    pub train_days: [i64; 2],
    /// Validation and evaluation period.
    pub val_days: [i64; 2],
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("data"),
            train_days: [0, 364],
            val_days: [365, 484],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    pub horizon: usize,
    pub forcing: ForcingKind,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            forcing: ForcingKind::Forecast,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub weighting: AreaWeighting,
    pub window: SpectralWindow,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            weighting: AreaWeighting::Uniform,
            window: SpectralWindow::Hann,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub generator: GeneratorConfig,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub rollout: RolloutConfig,
    pub evaluation: EvalConfig,
    /// Directory for checkpoints and logs, relative to the config file.
    pub output_dir: PathBuf,
    /// Seed of the model's parameter initialization.
    pub init_seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    /// Reads a config and resolves its relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut c = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut c.data.dataset, &mut c.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.model.validate()?;
        self.training.validate()?;
        let [a, b] = self.data.train_days;
        let [c, d] = self.data.val_days;
        if a > b || c > d {
            return Err(Error::Config("day ranges must be ordered".into()));
        }
        if self.rollout.horizon == 0 {
            return Err(Error::Config("rollout horizon must be at least 1".into()));
        }
        Ok(())
    }

    /// The document with every default expanded.
    pub fn resolved(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("configuration serializes")
    }
}
