//! Frequency-bias analyses: rank-weighted frequency of top predictions,
//! mean log frequency of top-1 answers, and majority-label share.

use crate::corpus::{FactDataset, FreqTable, RelationId};
use crate::error::{Error, Result};
use crate::mlm::Vocab;
use crate::scalar::Scalar;
use crate::spe::Prediction;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Relative-frequency floor for tokens absent from the frequency table.
pub const FREQ_FLOOR: f64 = 1e-9;

/// Rank Weighted Frequency over ranked candidate tokens:
/// sum over n = 1..=m of (1/n) * log10(relative frequency of candidate n).
/// Lower values mean the ranking leans less on frequent tokens.
pub fn rwf_tokens<T: AsRef<str>>(
    ranked_tokens: &[T],
    freq: &FreqTable,
    m: usize,
    floor: f64,
) -> Result<f64> {
    if m == 0 {
        return Err(Error::config("m must be >= 1"));
    }
    if m > ranked_tokens.len() {
        return Err(Error::config(format!(
            "m = {m} exceeds ranking length {}",
            ranked_tokens.len()
        )));
    }
    let mut total = 0.0;
    for (n, tok) in ranked_tokens.iter().take(m).enumerate() {
        total += freq.log10_rel(tok.as_ref(), floor) / (n + 1) as f64;
    }
    Ok(total)
}

/// [`rwf_tokens`] over one prediction's ranking.
pub fn rwf<S: Scalar>(
    prediction: &Prediction<S>,
    vocab: &Vocab,
    freq: &FreqTable,
    m: usize,
    floor: f64,
) -> Result<f64> {
    let tokens: Vec<&str> = prediction
        .candidates
        .iter()
        .take(m.max(1).min(prediction.candidates.len()))
        .map(|c| vocab.token(c.token))
        .collect();
    if m > prediction.candidates.len() {
        return Err(Error::config(format!(
            "m = {m} exceeds ranking length {}",
            prediction.candidates.len()
        )));
    }
    rwf_tokens(&tokens, freq, m, floor)
}

/// Share of a relation's predictions whose top-1 equals the relation's most
/// frequent training gold object.
pub fn majority_label_pct<S: Scalar>(
    predictions: &[Prediction<S>],
    dataset: &FactDataset,
    vocab: &Vocab,
    relation: RelationId,
) -> Result<f64> {
    let majority = dataset
        .train_majority_objects()
        .get(&relation)
        .copied()
        .ok_or_else(|| {
            Error::config(format!(
                "relation {} absent from training split",
                dataset.relation(relation).id
            ))
        })?;
    let majority_token = vocab
        .get(&dataset.entity(majority).surface[0])
        .ok_or_else(|| Error::config("majority object token missing from vocabulary"))?;
    let rel_preds: Vec<&Prediction<S>> = predictions
        .iter()
        .filter(|p| p.relation == relation)
        .collect();
    if rel_preds.is_empty() {
        return Ok(0.0);
    }
    let hits = rel_preds.iter().filter(|p| p.chosen() == majority_token).count();
    Ok(hits as f64 / rel_preds.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    /// Mean per-triple RWF of the top `rwf_m` predictions.
    pub rwf: f64,
    /// Mean log10 relative frequency of top-1 predictions.
    pub mean_log10_freq_top1: f64,
    pub majority_label_pct: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub rwf_m: usize,
    pub per_relation: BTreeMap<String, BiasRow>,
}

impl BiasReport {
    /// Builds the per-relation bias table for predictions aligned with
    /// `indices`. `rwf_m` is clamped per ranking only through the error path:
    /// rankings shorter than `rwf_m` are an error, matching `rwf`.
    pub fn build<S: Scalar>(
        predictions: &[Prediction<S>],
        dataset: &FactDataset,
        vocab: &Vocab,
        freq: &FreqTable,
        rwf_m: usize,
    ) -> Result<BiasReport> {
        let mut per_relation = BTreeMap::new();
        let mut rels: Vec<RelationId> = predictions.iter().map(|p| p.relation).collect();
        rels.sort_unstable();
        rels.dedup();
        for rel in rels {
            let rel_preds: Vec<&Prediction<S>> =
                predictions.iter().filter(|p| p.relation == rel).collect();
            let mut rwf_sum = 0.0;
            let mut top1_sum = 0.0;
            for p in &rel_preds {
                rwf_sum += rwf(p, vocab, freq, rwf_m, FREQ_FLOOR)?;
                top1_sum += freq.log10_rel(vocab.token(p.chosen()), FREQ_FLOOR);
            }
            let n = rel_preds.len();
            per_relation.insert(
                dataset.relation(rel).id.clone(),
                BiasRow {
                    rwf: rwf_sum / n as f64,
                    mean_log10_freq_top1: top1_sum / n as f64,
                    majority_label_pct: majority_label_pct(predictions, dataset, vocab, rel)?,
                    count: n,
                },
            );
        }
        Ok(BiasReport {
            rwf_m,
            per_relation,
        })
    }
}
