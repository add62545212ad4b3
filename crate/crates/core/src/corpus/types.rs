//! Knowledge-base domain types: entities, relations, fact triples, datasets.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Index of an entity within a dataset's entity table.
pub type EntityId = usize;
/// Index of a relation within a dataset's relation table.
pub type RelationId = usize;

/// A named thing that can serve as a subject or object of a fact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    /// Whitespace tokens, 1-3 of them. Answer-type entities are single-token.
    pub surface: Vec<String>,
    pub type_tag: String,
}

impl Entity {
    pub fn surface_text(&self) -> String {
        self.surface.join(" ")
    }
}

/// How a relation's gold-object distribution (and surrounding text) is skewed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkewProfile {
    /// Objects drawn uniformly; no extra text pathology.
    Uniform,
    /// Gold objects are narrow terms; broad same-type alternatives are
    /// globally over-represented in the rendered text.
    Scope,
    /// A small pool of hub entities co-occurs with every subject in the
    /// rendered text, competing with the gold object.
    Cooccurrence,
    /// One gold object dominates the relation's label distribution.
    LabelImbalance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cardinality {
    /// Many subjects map into a closed, reused object set.
    N1,
    /// Subjects and objects associate more freely.
    NM,
}

/// Static description of one relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationSpec {
    pub id: String,
    pub cardinality: Cardinality,
    pub subject_type: String,
    pub answer_type: String,
    pub skew_profile: SkewProfile,
    /// Fraction of gold labels taken by the majority object. Only meaningful
    /// for [`SkewProfile::LabelImbalance`].
    #[serde(default)]
    pub majority_fraction: f64,
}

/// One (subject, relation, object) fact plus same-type wrong answers that
/// the renderer may weave into the text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactTriple {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
    pub distractors: Vec<EntityId>,
}

/// Train/dev/test partition over triple indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

/// A complete fact dataset: the entity/relation tables, the triples, the
/// split assignment, and the per-test-triple easy flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactDataset {
    pub entities: Vec<Entity>,
    pub relations: Vec<RelationSpec>,
    pub triples: Vec<FactTriple>,
    pub splits: Splits,
    /// `easy_mask[i]` flags `splits.test[i]`; empty only when test is empty.
    pub easy_mask: Vec<bool>,
}

impl FactDataset {
    pub fn entity(&self, id: EntityId) -> &Entity {
        &self.entities[id]
    }

    pub fn relation(&self, id: RelationId) -> &RelationSpec {
        &self.relations[id]
    }

    pub fn relation_index(&self, rel_id: &str) -> Option<RelationId> {
        self.relations.iter().position(|r| r.id == rel_id)
    }

    /// Gold-object counts over the training split, per relation.
    pub fn train_gold_counts(&self) -> BTreeMap<RelationId, BTreeMap<EntityId, usize>> {
        let mut counts: BTreeMap<RelationId, BTreeMap<EntityId, usize>> = BTreeMap::new();
        for &i in &self.splits.train {
            let t = &self.triples[i];
            *counts.entry(t.relation).or_default().entry(t.object).or_default() += 1;
        }
        counts
    }

    /// Most frequent training gold object per relation. Ties break toward
    /// the smallest entity id. Relations absent from train are absent here.
    pub fn train_majority_objects(&self) -> BTreeMap<RelationId, EntityId> {
        self.train_gold_counts()
            .into_iter()
            .map(|(rel, by_obj)| {
                let (&obj, _) = by_obj
                    .iter()
                    .max_by(|(a_id, a_n), (b_id, b_n)| a_n.cmp(b_n).then(b_id.cmp(a_id)))
                    .expect("non-empty counts");
                (rel, obj)
            })
            .collect()
    }

    /// Checks every structural invariant; returns the first violation found.
    pub fn validate(&self) -> Result<()> {
        let n = self.triples.len();
        let mut seen = vec![false; n];
        for (name, split) in [
            ("train", &self.splits.train),
            ("dev", &self.splits.dev),
            ("test", &self.splits.test),
        ] {
            for &i in split {
                if i >= n {
                    return Err(Error::config(format!("{name} split index {i} out of range")));
                }
                if seen[i] {
                    return Err(Error::config(format!("triple {i} assigned to two splits")));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::config("splits do not cover all triples"));
        }
        if self.easy_mask.len() != self.splits.test.len() {
            return Err(Error::config(format!(
                "easy_mask has {} entries for {} test triples",
                self.easy_mask.len(),
                self.splits.test.len()
            )));
        }
        let train_rels: BTreeSet<RelationId> = self
            .splits
            .train
            .iter()
            .map(|&i| self.triples[i].relation)
            .collect();
        for (r, spec) in self.relations.iter().enumerate() {
            let used = self.triples.iter().any(|t| t.relation == r);
            if used && !train_rels.contains(&r) {
                return Err(Error::config(format!(
                    "relation {} has no training triples",
                    spec.id
                )));
            }
        }
        for (i, t) in self.triples.iter().enumerate() {
            if t.subject >= self.entities.len()
                || t.object >= self.entities.len()
                || t.relation >= self.relations.len()
            {
                return Err(Error::config(format!("triple {i} references unknown ids")));
            }
            let spec = &self.relations[t.relation];
            if self.entities[t.object].type_tag != spec.answer_type {
                return Err(Error::config(format!(
                    "triple {i}: object type {} != answer type {}",
                    self.entities[t.object].type_tag, spec.answer_type
                )));
            }
            if t.distractors.contains(&t.object) {
                return Err(Error::config(format!("triple {i}: object listed as distractor")));
            }
        }
        let mut ids = BTreeSet::new();
        for e in &self.entities {
            if !ids.insert(e.id) {
                return Err(Error::config(format!("duplicate entity id {}", e.id)));
            }
        }
        Ok(())
    }
}
