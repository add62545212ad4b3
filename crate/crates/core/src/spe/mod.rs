//! The symmetric prompt enhancement engine: joint training, candidate
//! generation, and symmetric reranking.

pub mod config;
pub mod predict;
pub mod score;
pub mod train;

pub use config::SpeConfig;
pub use predict::{
    evaluate_split, predict, read_predictions, triple_query, write_predictions, Candidate,
    DumpCandidate, DumpRecord, Prediction,
};
pub use score::{score_object, score_subject, topk_candidates, AnswerDistribution};
pub use train::{train, train_with_hook, triple_loss, EpochLog, ImprovementHook, ProbeTrainOutcome};
