//! Evaluation metrics, bias analyses, and report emission.

pub mod bias;
pub mod metrics;
pub mod report;

pub use bias::{majority_label_pct, rwf, rwf_tokens, BiasReport, BiasRow, FREQ_FLOOR};
pub use metrics::{easy_hard_report, gold_ranks, mrr, precision_at_k, EvalReport, Metrics};
pub use report::{ComparisonReport, RunReport, REPORT_SCHEMA_VERSION};
