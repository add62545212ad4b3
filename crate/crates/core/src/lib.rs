//! Desk-scale factual probing of a tiny masked language model with
//! symmetric continuous prompts.
//!
//! The pipeline: generate a synthetic fact corpus with controllable
//! statistical pathologies ([`corpus`]), pretrain a small transformer
//! masked LM on it ([`mlm`]), learn relation prompts through a shared
//! recurrent encoder ([`prompt`]), train and run the symmetric scoring
//! engine ([`spe`]), and report retrieval plus bias metrics ([`eval`]).
//!
//! All numeric code is generic over the scalar type; `f32` aliases suit
//! experiment sweeps, `f64` aliases suit gradient checking.

pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod mlm;
pub mod optim;
pub mod prompt;
pub mod scalar;
pub mod spe;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Backbone over `f32`.
pub type Mlm32 = mlm::Mlm<f32>;
/// Backbone over `f64`.
pub type Mlm64 = mlm::Mlm<f64>;
/// Prompt encoder over `f32`.
pub type PromptEncoder32 = prompt::PromptEncoder<f32>;
/// Prompt encoder over `f64`.
pub type PromptEncoder64 = prompt::PromptEncoder<f64>;
