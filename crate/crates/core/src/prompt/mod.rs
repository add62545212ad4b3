//! Continuous prompt generation and assembly.

pub mod assemble;
pub mod encoder;
pub mod template;

pub use assemble::{assemble_orig, assemble_sym, AssembledPrompt, PromptKind};
pub use encoder::{EncodeCache, PromptEncoder};
pub use template::Template;
