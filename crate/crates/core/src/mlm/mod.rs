//! The tiny masked-LM backbone and its frozen-parameter probing interface.

pub mod config;
pub mod model;
pub mod slots;
pub mod train;
pub mod vocab;

pub use config::{MlmConfig, MlmTrainConfig};
pub use model::{ForwardPass, InputGrads, LayerNormParams, LayerWeights, MaskLoss, Mlm, MlmWeights};
pub use slots::{Slot, SlotSequence};
pub use train::{train_mlm, MlmTrainOutcome};
pub use vocab::{TokenId, Vocab};
