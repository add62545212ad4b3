//! Synthetic knowledge bases, text rendering, and fact-file ingestion.

pub mod config;
pub mod easy_hard;
pub mod freq;
pub mod generate;
pub mod lama;
pub mod render;
pub mod types;

pub use config::{CorpusConfig, EntityTypeConfig, RelationConfig, RenderConfig, SplitConfig};
pub use easy_hard::split_easy_hard;
pub use freq::{word_freq, FreqTable};
pub use generate::gen_kb;
pub use lama::{load_lama_jsonl, write_lama_jsonl, LamaLoadStats, UnknownTokenPolicy};
pub use render::{render_corpus, Sentence, SentenceKind, TextCorpus};
pub use types::{
    Cardinality, Entity, EntityId, FactDataset, FactTriple, RelationId, RelationSpec, SkewProfile,
    Splits,
};
