//! Backbone architecture and pretraining configuration.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Architecture of the masked-LM backbone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlmConfig {
    #[serde(default = "MlmConfig::default_layers")]
    pub layers: usize,
    #[serde(default = "MlmConfig::default_heads")]
    pub heads: usize,
    /// Embedding / hidden width; also the prompt-vector dimension.
    #[serde(default = "MlmConfig::default_dim")]
    pub dim: usize,
    #[serde(default = "MlmConfig::default_ff_dim")]
    pub ff_dim: usize,
    #[serde(default = "MlmConfig::default_max_seq")]
    pub max_seq: usize,
    /// Output projection shares the embedding table when true.
    #[serde(default = "MlmConfig::default_tied_output")]
    pub tied_output: bool,
}

impl MlmConfig {
    fn default_layers() -> usize {
        2
    }
    fn default_heads() -> usize {
        4
    }
    fn default_dim() -> usize {
        64
    }
    fn default_ff_dim() -> usize {
        256
    }
    fn default_max_seq() -> usize {
        32
    }
    fn default_tied_output() -> bool {
        true
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.layers == 0 || self.max_seq == 0 {
            return Err(Error::config("mlm dims must be positive"));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::config(format!(
                "dim {} not divisible by heads {}",
                self.dim, self.heads
            )));
        }
        if self.ff_dim == 0 {
            return Err(Error::config("ff_dim must be positive"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

impl Default for MlmConfig {
    fn default() -> Self {
        MlmConfig {
            layers: Self::default_layers(),
            heads: Self::default_heads(),
            dim: Self::default_dim(),
            ff_dim: Self::default_ff_dim(),
            max_seq: Self::default_max_seq(),
            tied_output: Self::default_tied_output(),
        }
    }
}

/// Pretraining loop settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlmTrainConfig {
    #[serde(default = "MlmTrainConfig::default_epochs")]
    pub epochs: usize,
    #[serde(default = "MlmTrainConfig::default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "MlmTrainConfig::default_lr")]
    pub lr: f64,
    /// Fraction of maskable units selected per sentence.
    #[serde(default = "MlmTrainConfig::default_mask_rate")]
    pub mask_rate: f64,
}

impl MlmTrainConfig {
    fn default_epochs() -> usize {
        30
    }
    fn default_batch_size() -> usize {
        32
    }
    fn default_lr() -> f64 {
        1e-3
    }
    fn default_mask_rate() -> f64 {
        0.15
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch_size must be positive"));
        }
        if self.lr <= 0.0 {
            return Err(Error::config("lr must be positive"));
        }
        if !(0.0..=1.0).contains(&self.mask_rate) || self.mask_rate == 0.0 {
            return Err(Error::config("mask_rate must be in (0, 1]"));
        }
        Ok(())
    }
}

impl Default for MlmTrainConfig {
    fn default() -> Self {
        MlmTrainConfig {
            epochs: Self::default_epochs(),
            batch_size: Self::default_batch_size(),
            lr: Self::default_lr(),
            mask_rate: Self::default_mask_rate(),
        }
    }
}
