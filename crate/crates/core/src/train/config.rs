use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};

/// Step decay: the learning rate is multiplied by `factor` every `every` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrDecay {
    pub factor: f64,
    pub every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub lr_decay: Option<LrDecay>,
    /// Forces single-threaded kernels for the duration of the run.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 32,
            max_epochs: 30,
            seed: 0,
            lr_decay: None,
            deterministic: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return arg_err(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return arg_err(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0) {
            return arg_err(format!("weight decay must be non-negative, got {}", self.weight_decay));
        }
        if self.batch_size == 0 {
            return arg_err("batch size must be at least 1");
        }
        if self.max_epochs == 0 {
            return arg_err("max epochs must be at least 1");
        }
        if let Some(d) = self.lr_decay {
            if !(d.factor > 0.0) || d.every == 0 {
                return arg_err(format!("invalid lr decay {d:?}"));
            }
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_decay {
            Some(d) => self.learning_rate * d.factor.powi((epoch / d.every) as i32),
            None => self.learning_rate,
        }
    }
}
