//! Engine configuration: the symmetric weight, candidate-pool size, and
//! probe-training hyperparameters.

use crate::error::{Error, Result};
use crate::mlm::TokenId;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeConfig {
    /// Weight of the symmetric term, in both the objective and the
    /// inference score.
    #[serde(default = "SpeConfig::default_lambda")]
    pub lambda: f64,
    /// Candidate-pool size.
    #[serde(default = "SpeConfig::default_k")]
    pub k: usize,
    #[serde(default = "SpeConfig::default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "SpeConfig::default_lr")]
    pub lr: f64,
    /// Epochs without a dev P@1 increase before stopping.
    #[serde(default = "SpeConfig::default_patience")]
    pub patience: usize,
    #[serde(default = "SpeConfig::default_max_epochs")]
    pub max_epochs: usize,
    /// Update backbone parameters jointly with the prompt encoder.
    #[serde(default)]
    pub finetune_backbone: bool,
    /// Restrict candidates to these token ids (sorted, deduped); `None`
    /// means the full vocabulary.
    #[serde(default)]
    pub answer_vocab: Option<Vec<TokenId>>,
}

impl SpeConfig {
    fn default_lambda() -> f64 {
        0.8
    }
    fn default_k() -> usize {
        15
    }
    fn default_batch_size() -> usize {
        8
    }
    fn default_lr() -> f64 {
        1e-5
    }
    fn default_patience() -> usize {
        20
    }
    fn default_max_epochs() -> usize {
        100
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if self.k == 0 {
            return Err(Error::config("k must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(Error::config("lr must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs must be >= 1"));
        }
        if let Some(av) = &self.answer_vocab {
            if av.is_empty() {
                return Err(Error::config("answer_vocab must not be empty"));
            }
            if av.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config("answer_vocab must be sorted and deduplicated"));
            }
            if *av.last().unwrap() >= vocab_size {
                return Err(Error::config("answer_vocab contains out-of-range token ids"));
            }
            if self.k > av.len() {
                return Err(Error::config(format!(
                    "k = {} exceeds answer vocabulary size {}",
                    self.k,
                    av.len()
                )));
            }
        }
        Ok(())
    }
}

impl Default for SpeConfig {
    fn default() -> Self {
        SpeConfig {
            lambda: Self::default_lambda(),
            k: Self::default_k(),
            batch_size: Self::default_batch_size(),
            lr: Self::default_lr(),
            patience: Self::default_patience(),
            max_epochs: Self::default_max_epochs(),
            finetune_backbone: false,
            answer_vocab: None,
        }
    }
}
