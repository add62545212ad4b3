//! Corpus generation configuration (TOML, versioned).

use crate::corpus::types::{Cardinality, SkewProfile};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CORPUS_SCHEMA_VERSION: u32 = 1;

fn default_schema_version() -> u32 {
    CORPUS_SCHEMA_VERSION
}

fn default_surface_len() -> (usize, usize) {
    (1, 3)
}

fn default_distractors() -> usize {
    2
}

fn default_pool() -> usize {
    3
}

/// One entity type: how many entities to mint and how long their surfaces are.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntityTypeConfig {
    pub name: String,
    pub count: usize,
    /// Inclusive (min, max) surface length in tokens.
    #[serde(default = "default_surface_len")]
    pub surface_len: (usize, usize),
}

/// One relation to generate facts for.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelationConfig {
    pub id: String,
    #[serde(default = "RelationConfig::default_cardinality")]
    pub cardinality: Cardinality,
    pub subject_type: String,
    pub answer_type: String,
    #[serde(default = "RelationConfig::default_skew")]
    pub skew: SkewProfile,
    /// Majority share of gold labels; required for label-imbalance skew.
    #[serde(default)]
    pub majority_fraction: f64,
    /// Number of triples to generate.
    pub triples: usize,
    /// Distractor entities recorded per triple.
    #[serde(default = "default_distractors")]
    pub distractors: usize,
    /// Size of the hub pool (cooccurrence) or broad pool (scope) carved out
    /// of the answer type's entities.
    #[serde(default = "default_pool")]
    pub special_pool: usize,
}

impl RelationConfig {
    fn default_cardinality() -> Cardinality {
        Cardinality::N1
    }
    fn default_skew() -> SkewProfile {
        SkewProfile::Uniform
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train: 0.6,
            dev: 0.2,
            test: 0.2,
        }
    }
}

/// Text-rendering knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenderConfig {
    /// Probability that a triple also gets an object-first sentence.
    #[serde(default = "RenderConfig::default_p_inverse")]
    pub p_inverse: f64,
    /// Mean number of subject+distractor co-mention sentences per triple of
    /// a cooccurrence-skew relation.
    #[serde(default = "RenderConfig::default_comention_rate")]
    pub comention_rate: f64,
    /// Mean number of background sentences per triple of a scope-skew
    /// relation, each boosting a broad-pool entity.
    #[serde(default = "RenderConfig::default_background_rate")]
    pub scope_background_rate: f64,
    /// Render co-mention sentences with the relation's own connector words
    /// instead of a dedicated connector.
    #[serde(default = "RenderConfig::default_comention_uses_relation_words")]
    pub comention_uses_relation_words: bool,
    /// Render facts from every split, not just train. The probe's test facts
    /// must exist in the pretraining text for probing to be meaningful.
    #[serde(default = "RenderConfig::default_include_all_splits")]
    pub include_all_splits: bool,
}

impl RenderConfig {
    fn default_p_inverse() -> f64 {
        0.5
    }
    fn default_comention_rate() -> f64 {
        3.0
    }
    fn default_background_rate() -> f64 {
        2.0
    }
    fn default_comention_uses_relation_words() -> bool {
        true
    }
    fn default_include_all_splits() -> bool {
        true
    }
}

impl Default for RenderConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

/// Full corpus-generation configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub entity_types: Vec<EntityTypeConfig>,
    pub relations: Vec<RelationConfig>,
    #[serde(default)]
    pub splits: SplitConfig,
    #[serde(default)]
    pub render: RenderConfig,
}

impl CorpusConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: CorpusConfig =
            toml::from_str(s).map_err(|e| Error::config(format!("corpus config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn entity_type(&self, name: &str) -> Option<&EntityTypeConfig> {
        self.entity_types.iter().find(|t| t.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CORPUS_SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported corpus schema_version {} (expected {CORPUS_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let s = &self.splits;
        let total = s.train + s.dev + s.test;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "split fractions must sum to 1, got {total}"
            )));
        }
        if s.train <= 0.0 || s.dev < 0.0 || s.test < 0.0 {
            return Err(Error::config("split fractions must be nonnegative with train > 0"));
        }
        if self.entity_types.is_empty() {
            return Err(Error::config("no entity types configured"));
        }
        for t in &self.entity_types {
            if t.count == 0 {
                return Err(Error::config(format!("entity type {} has count 0", t.name)));
            }
            if t.surface_len.0 == 0 || t.surface_len.0 > t.surface_len.1 {
                return Err(Error::config(format!(
                    "entity type {}: bad surface_len {:?}",
                    t.name, t.surface_len
                )));
            }
        }
        if self.relations.is_empty() {
            return Err(Error::config("no relations configured"));
        }
        for r in &self.relations {
            let subj = self
                .entity_type(&r.subject_type)
                .ok_or_else(|| Error::config(format!("relation {}: unknown subject_type {}", r.id, r.subject_type)))?;
            let ans = self
                .entity_type(&r.answer_type)
                .ok_or_else(|| Error::config(format!("relation {}: unknown answer_type {}", r.id, r.answer_type)))?;
            if ans.surface_len != (1, 1) {
                return Err(Error::config(format!(
                    "relation {}: answer_type {} must use single-token surfaces",
                    r.id, r.answer_type
                )));
            }
            if r.triples == 0 {
                return Err(Error::config(format!("relation {}: triples must be > 0", r.id)));
            }
            if r.triples > subj.count {
                return Err(Error::config(format!(
                    "relation {}: {} triples need {} distinct subjects but type {} has {}",
                    r.id, r.triples, r.triples, r.subject_type, subj.count
                )));
            }
            if r.distractors + 1 > ans.count {
                return Err(Error::config(format!(
                    "relation {}: {} distractors + object exceed answer pool {}",
                    r.id, r.distractors, ans.count
                )));
            }
            match r.skew {
                SkewProfile::LabelImbalance => {
                    let min = 1.0 / ans.count as f64;
                    if r.majority_fraction < min || r.majority_fraction > 1.0 {
                        return Err(Error::config(format!(
                            "relation {}: majority_fraction {} outside [{min:.4}, 1] for {} answers",
                            r.id, r.majority_fraction, ans.count
                        )));
                    }
                }
                SkewProfile::Cooccurrence => {
                    if r.distractors < 2 {
                        return Err(Error::config(format!(
                            "relation {}: cooccurrence skew needs >= 2 distractors",
                            r.id
                        )));
                    }
                    if r.special_pool < r.distractors + 1 {
                        return Err(Error::config(format!(
                            "relation {}: hub pool {} too small for {} distractors",
                            r.id, r.special_pool, r.distractors
                        )));
                    }
                    if r.special_pool >= ans.count {
                        return Err(Error::config(format!(
                            "relation {}: hub pool {} must leave non-hub answers",
                            r.id, r.special_pool
                        )));
                    }
                }
                SkewProfile::Scope => {
                    if r.special_pool == 0 || r.special_pool >= ans.count {
                        return Err(Error::config(format!(
                            "relation {}: broad pool {} must be in 1..{}",
                            r.id, r.special_pool, ans.count
                        )));
                    }
                }
                SkewProfile::Uniform => {}
            }
        }
        if self.render.p_inverse < 0.0 || self.render.p_inverse > 1.0 {
            return Err(Error::config("render.p_inverse must be in [0,1]"));
        }
        if self.render.comention_rate < 0.0 || self.render.scope_background_rate < 0.0 {
            return Err(Error::config("render rates must be nonnegative"));
        }
        Ok(())
    }
}
