use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Optimizer and loop settings. `learning_rate` has no default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    #[serde(default = "default_betas")]
    pub betas: [f64; 2],
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
}

fn default_betas() -> [f64; 2] {
    [0.9, 0.999]
}

fn default_weight_decay() -> f64 {
    0.00055
}

fn default_batch_size() -> usize {
    512
}

impl TrainConfig {
    /// Defaults for everything except the learning rate and epoch budget.
    pub fn new(learning_rate: f64, epochs: usize) -> Self {
        Self {
            learning_rate,
            betas: default_betas(),
            weight_decay: default_weight_decay(),
            batch_size: default_batch_size(),
            epochs,
            seed: 0,
            precision: Precision::F32,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::Config(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Err(TrainError::Config(format!(
                "betas {:?} must lie in [0, 1)",
                self.betas
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(TrainError::Config(format!(
                "weight_decay {} must be non-negative",
                self.weight_decay
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(TrainError::Config("batch_size and epochs must be positive".into()));
        }
        Ok(())
    }
}
