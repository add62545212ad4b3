//! Run configuration: one TOML file describing the whole experiment.
//! Command-line flags override file values; the file overrides defaults.

use anyhow::Context;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use symprobe_core::corpus::CorpusConfig;
use symprobe_core::error::Error;
use symprobe_core::mlm::{MlmConfig, MlmTrainConfig, Vocab};
use symprobe_core::spe::SpeConfig;

pub const RUN_SCHEMA_VERSION: u32 = 1;

/// A small demo experiment used when no config file is given.
pub const DEFAULT_CONFIG_TOML: &str = r#"
schema_version = 1
seed = 42
out_dir = "runs/default"
precision = "f32"

[[corpus.entity_types]]
name = "person"
count = 260
surface_len = [1, 3]

[[corpus.entity_types]]
name = "place"
count = 24
surface_len = [1, 1]

[[corpus.relations]]
id = "born-in"
subject_type = "person"
answer_type = "place"
skew = "cooccurrence"
triples = 120
distractors = 2
special_pool = 4

[[corpus.relations]]
id = "continent"
subject_type = "person"
answer_type = "place"
skew = "label-imbalance"
majority_fraction = 0.92
triples = 120
distractors = 2

[corpus.splits]
train = 0.6
dev = 0.15
test = 0.25

[corpus.render]
p_inverse = 0.6
comention_rate = 3.0

[mlm]
layers = 2
heads = 4
dim = 64
ff_dim = 256
max_seq = 32
tied_output = true

[mlm_train]
epochs = 40
batch_size = 16
lr = 1e-3
mask_rate = 0.15

[spe]
lambda = 0.8
k = 15
batch_size = 8
lr = 3e-3
patience = 20
max_epochs = 60

[eval]
rwf_m = 10
dump_top_n = 15
"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

/// [`SpeConfig`] with the answer vocabulary as token strings; resolved to
/// ids once a vocabulary exists.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeFileConfig {
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    #[serde(default = "d_k")]
    pub k: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_patience")]
    pub patience: usize,
    #[serde(default = "d_max_epochs")]
    pub max_epochs: usize,
    #[serde(default)]
    pub finetune_backbone: bool,
    #[serde(default)]
    pub answer_vocab: Option<Vec<String>>,
}

fn d_lambda() -> f64 {
    0.8
}
fn d_k() -> usize {
    15
}
fn d_batch() -> usize {
    8
}
fn d_lr() -> f64 {
    1e-5
}
fn d_patience() -> usize {
    20
}
fn d_max_epochs() -> usize {
    100
}

impl Default for SpeFileConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

impl SpeFileConfig {
    /// Resolves token strings against `vocab` and validates.
    pub fn to_core(&self, vocab: &Vocab) -> anyhow::Result<SpeConfig> {
        let answer_vocab = match &self.answer_vocab {
            None => None,
            Some(tokens) => {
                let mut ids = Vec::with_capacity(tokens.len());
                for t in tokens {
                    let id = vocab.get(t).ok_or_else(|| {
                        Error::config(format!("answer_vocab token {t:?} not in vocabulary"))
                    })?;
                    ids.push(id);
                }
                ids.sort_unstable();
                ids.dedup();
                Some(ids)
            }
        };
        let cfg = SpeConfig {
            lambda: self.lambda,
            k: self.k,
            batch_size: self.batch_size,
            lr: self.lr,
            patience: self.patience,
            max_epochs: self.max_epochs,
            finetune_backbone: self.finetune_backbone,
            answer_vocab,
        };
        cfg.validate(vocab.len())?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalFileConfig {
    #[serde(default = "d_rwf_m")]
    pub rwf_m: usize,
    #[serde(default = "d_dump_top_n")]
    pub dump_top_n: usize,
}

fn d_rwf_m() -> usize {
    10
}
fn d_dump_top_n() -> usize {
    15
}

impl Default for EvalFileConfig {
    fn default() -> Self {
        EvalFileConfig {
            rwf_m: d_rwf_m(),
            dump_top_n: d_dump_top_n(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "d_schema")]
    pub schema_version: u32,
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default = "d_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "d_precision")]
    pub precision: Precision,
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub mlm: MlmConfig,
    #[serde(default)]
    pub mlm_train: MlmTrainConfig,
    #[serde(default)]
    pub spe: SpeFileConfig,
    #[serde(default)]
    pub eval: EvalFileConfig,
}

fn d_schema() -> u32 {
    RUN_SCHEMA_VERSION
}
fn d_seed() -> u64 {
    42
}
fn d_out_dir() -> PathBuf {
    PathBuf::from("runs/default")
}
fn d_precision() -> Precision {
    Precision::F32
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text)
            .map_err(|e| Error::config(format!("run config: {e}")))?;
        if cfg.schema_version != RUN_SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported run config schema_version {}",
                cfg.schema_version
            ))
            .into());
        }
        cfg.corpus.validate()?;
        cfg.mlm.validate()?;
        cfg.mlm_train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(Error::Io)
                    .with_context(|| format!("reading config {}", p.display()))?;
                Self::from_toml_str(&text)
            }
            None => Self::from_toml_str(DEFAULT_CONFIG_TOML),
        }
    }

    /// Hash of the corpus section; recorded in the generation manifest.
    pub fn corpus_config_sha256(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = toml::to_string(&self.corpus).expect("corpus config serializes");
        let mut h = Sha256::new();
        h.update(canonical.as_bytes());
        hex_string(&h.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Well-known file locations inside an experiment directory.
pub struct Paths {
    pub out_dir: PathBuf,
}

impl Paths {
    pub fn new(out_dir: &Path) -> Self {
        Paths {
            out_dir: out_dir.to_path_buf(),
        }
    }

    pub fn manifest(&self) -> PathBuf {
        self.out_dir.join("manifest.json")
    }
    pub fn dataset(&self) -> PathBuf {
        self.out_dir.join("dataset.json")
    }
    pub fn facts(&self) -> PathBuf {
        self.out_dir.join("facts.jsonl")
    }
    pub fn corpus_text(&self) -> PathBuf {
        self.out_dir.join("corpus.txt")
    }
    pub fn corpus_spans(&self) -> PathBuf {
        self.out_dir.join("corpus.spans.jsonl")
    }
    pub fn freq(&self) -> PathBuf {
        self.out_dir.join("freq.txt")
    }
    pub fn mlm_ckpt(&self) -> PathBuf {
        self.out_dir.join("mlm.ckpt")
    }
    pub fn mlm_train_log(&self) -> PathBuf {
        self.out_dir.join("mlm-train-log.json")
    }
    pub fn probe_ckpt(&self, label: &str) -> PathBuf {
        self.out_dir.join(format!("probe-{label}.ckpt"))
    }
    pub fn finetuned_mlm_ckpt(&self, label: &str) -> PathBuf {
        self.out_dir.join(format!("mlm-finetuned-{label}.ckpt"))
    }
    pub fn train_log(&self, label: &str) -> PathBuf {
        self.out_dir.join(format!("train-log-{label}.json"))
    }
    pub fn report_json(&self, label: &str) -> PathBuf {
        self.out_dir.join(format!("report-{label}.json"))
    }
    pub fn report_text(&self, label: &str) -> PathBuf {
        self.out_dir.join(format!("report-{label}.txt"))
    }
    pub fn predictions(&self, label: &str) -> PathBuf {
        self.out_dir.join(format!("predictions-{label}.jsonl"))
    }
    pub fn sweep_k_json(&self, label: &str) -> PathBuf {
        self.out_dir.join(format!("sweep-k-{label}.json"))
    }
    pub fn sweep_k_text(&self, label: &str) -> PathBuf {
        self.out_dir.join(format!("sweep-k-{label}.txt"))
    }
    pub fn sweep_lambda_json(&self, label: &str) -> PathBuf {
        self.out_dir.join(format!("sweep-lambda-{label}.json"))
    }
    pub fn sweep_lambda_text(&self, label: &str) -> PathBuf {
        self.out_dir.join(format!("sweep-lambda-{label}.txt"))
    }
    pub fn sweep_comparison_json(&self) -> PathBuf {
        self.out_dir.join("sweep-comparison.json")
    }
    pub fn sweep_comparison_text(&self) -> PathBuf {
        self.out_dir.join("sweep-comparison.txt")
    }
    pub fn analysis_json(&self) -> PathBuf {
        self.out_dir.join("analysis.json")
    }
    pub fn analysis_text(&self) -> PathBuf {
        self.out_dir.join("analysis.txt")
    }
}
