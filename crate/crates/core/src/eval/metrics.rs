//! Retrieval metrics: P@1, P@10, MRR, per-relation and easy/hard breakdowns.

use crate::corpus::FactDataset;
use crate::error::{Error, Result};
use crate::mlm::TokenId;
use crate::scalar::Scalar;
use crate::spe::Prediction;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Metrics over a non-empty set of queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub p_at_1: f64,
    pub p_at_10: f64,
    pub mrr: f64,
}

impl Metrics {
    /// From 1-based gold ranks (`None` = gold absent, contributing 0 to
    /// every metric). Returns `None` for an empty input, never NaN.
    pub fn from_ranks(ranks: &[Option<usize>]) -> Option<Metrics> {
        if ranks.is_empty() {
            return None;
        }
        let n = ranks.len() as f64;
        let hit = |k: usize| ranks.iter().filter(|r| r.is_some_and(|r| r <= k)).count() as f64 / n;
        let mrr = ranks
            .iter()
            .map(|r| r.map_or(0.0, |r| 1.0 / r as f64))
            .sum::<f64>()
            / n;
        Some(Metrics {
            count: ranks.len(),
            p_at_1: hit(1),
            p_at_10: hit(10),
            mrr,
        })
    }
}

/// 1-based gold ranks for aligned prediction/gold lists.
pub fn gold_ranks<S: Scalar>(
    predictions: &[Prediction<S>],
    golds: &[TokenId],
) -> Result<Vec<Option<usize>>> {
    if predictions.len() != golds.len() {
        return Err(Error::config(format!(
            "predictions/golds length mismatch: {} vs {}",
            predictions.len(),
            golds.len()
        )));
    }
    Ok(predictions
        .iter()
        .zip(golds)
        .map(|(p, &g)| p.rank_of(g))
        .collect())
}

/// Fraction of queries whose gold appears in the top k.
pub fn precision_at_k<S: Scalar>(
    predictions: &[Prediction<S>],
    golds: &[TokenId],
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::config("k must be >= 1"));
    }
    let ranks = gold_ranks(predictions, golds)?;
    if ranks.is_empty() {
        return Ok(0.0);
    }
    Ok(ranks.iter().filter(|r| r.is_some_and(|r| r <= k)).count() as f64 / ranks.len() as f64)
}

/// Mean reciprocal rank; absent golds contribute zero.
pub fn mrr<S: Scalar>(predictions: &[Prediction<S>], golds: &[TokenId]) -> Result<f64> {
    let ranks = gold_ranks(predictions, golds)?;
    if ranks.is_empty() {
        return Ok(0.0);
    }
    Ok(ranks
        .iter()
        .map(|r| r.map_or(0.0, |r| 1.0 / r as f64))
        .sum::<f64>()
        / ranks.len() as f64)
}

/// Full evaluation report over one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `None` only for an empty split.
    pub overall: Option<Metrics>,
    pub per_relation: BTreeMap<String, Metrics>,
    /// Present when an easy mask applies to the evaluated split.
    pub easy: Option<Metrics>,
    pub hard: Option<Metrics>,
    pub easy_count: usize,
    pub hard_count: usize,
}

impl EvalReport {
    /// Builds the report for predictions aligned with `indices` into the
    /// dataset. `easy_mask`, when given, must align with `indices`.
    pub fn build<S: Scalar>(
        predictions: &[Prediction<S>],
        golds: &[TokenId],
        dataset: &FactDataset,
        indices: &[usize],
        easy_mask: Option<&[bool]>,
    ) -> Result<EvalReport> {
        if predictions.len() != indices.len() {
            return Err(Error::config("predictions/indices length mismatch"));
        }
        let ranks = gold_ranks(predictions, golds)?;
        let overall = Metrics::from_ranks(&ranks);

        let mut by_rel: BTreeMap<String, Vec<Option<usize>>> = BTreeMap::new();
        for (&i, rank) in indices.iter().zip(&ranks) {
            let rel = dataset.relation(dataset.triples[i].relation).id.clone();
            by_rel.entry(rel).or_default().push(*rank);
        }
        let per_relation = by_rel
            .into_iter()
            .filter_map(|(rel, rs)| Metrics::from_ranks(&rs).map(|m| (rel, m)))
            .collect();

        let (easy, hard, easy_count, hard_count) = match easy_mask {
            None => (None, None, 0, 0),
            Some(mask) => {
                if mask.len() != ranks.len() {
                    return Err(Error::config(format!(
                        "easy mask has {} entries for {} predictions",
                        mask.len(),
                        ranks.len()
                    )));
                }
                let easy_ranks: Vec<Option<usize>> = ranks
                    .iter()
                    .zip(mask)
                    .filter(|(_, &e)| e)
                    .map(|(r, _)| *r)
                    .collect();
                let hard_ranks: Vec<Option<usize>> = ranks
                    .iter()
                    .zip(mask)
                    .filter(|(_, &e)| !e)
                    .map(|(r, _)| *r)
                    .collect();
                (
                    Metrics::from_ranks(&easy_ranks),
                    Metrics::from_ranks(&hard_ranks),
                    easy_ranks.len(),
                    hard_ranks.len(),
                )
            }
        };

        Ok(EvalReport {
            overall,
            per_relation,
            easy,
            hard,
            easy_count,
            hard_count,
        })
    }
}

/// Easy/hard metric pair over the test split. Errors when the easy mask is
/// missing; empty subsets come back as `None`, never NaN.
pub fn easy_hard_report<S: Scalar>(
    predictions: &[Prediction<S>],
    golds: &[TokenId],
    dataset: &FactDataset,
) -> Result<(Option<Metrics>, Option<Metrics>)> {
    if dataset.easy_mask.len() != dataset.splits.test.len() || predictions.len() != dataset.splits.test.len() {
        return Err(Error::config(
            "easy/hard report needs test-aligned predictions and a populated easy mask",
        ));
    }
    let report = EvalReport::build(
        predictions,
        golds,
        dataset,
        &dataset.splits.test,
        Some(&dataset.easy_mask),
    )?;
    Ok((report.easy, report.hard))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Minimal prediction with the given ranking of token ids.
    fn pred(ranking: &[TokenId]) -> Prediction<f64> {
        let n = ranking.len();
        Prediction {
            subject: vec![0],
            relation: 0,
            candidates: ranking
                .iter()
                .enumerate()
                .map(|(i, &token)| crate::spe::Candidate {
                    token,
                    forward_logp: -(i as f64),
                    sym_logp: 0.0,
                    combined: -(i as f64),
                    reranked: false,
                })
                .collect(),
            k: n,
            lambda: 0.0,
        }
    }

    #[test]
    fn all_rank_one_gives_one_for_any_k() {
        let preds = vec![pred(&[5, 6]), pred(&[7, 8])];
        let golds = vec![5, 7];
        assert_eq!(precision_at_k(&preds, &golds, 1).unwrap(), 1.0);
        assert_eq!(precision_at_k(&preds, &golds, 10).unwrap(), 1.0);
        assert_eq!(mrr(&preds, &golds).unwrap(), 1.0);
    }

    #[test]
    fn ranks_one_three_twenty_at_ten_is_two_thirds() {
        let mk = |rank: usize| {
            let mut ranking: Vec<TokenId> = (0..25).collect();
            // put token 99 at 1-based position `rank`
            ranking.insert(rank - 1, 99);
            pred(&ranking)
        };
        let preds = vec![mk(1), mk(3), mk(20)];
        let golds = vec![99, 99, 99];
        let p10 = precision_at_k(&preds, &golds, 10).unwrap();
        assert!((p10 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mrr_formula_direct() {
        let mk = |rank: usize| {
            let mut ranking: Vec<TokenId> = (0..10).collect();
            ranking.insert(rank - 1, 99);
            pred(&ranking)
        };
        let preds = vec![mk(1), mk(2), mk(4)];
        let golds = vec![99, 99, 99];
        let m = mrr(&preds, &golds).unwrap();
        assert!((m - (1.0 + 0.5 + 0.25) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn absent_gold_contributes_zero() {
        let preds = vec![pred(&[1, 2, 3])];
        let golds = vec![42];
        assert_eq!(mrr(&preds, &golds).unwrap(), 0.0);
        assert_eq!(precision_at_k(&preds, &golds, 3).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch_errors() {
        let preds = vec![pred(&[1])];
        assert!(precision_at_k(&preds, &[1, 2], 1).is_err());
        assert!(mrr(&preds, &[]).is_err());
    }

    #[test]
    fn random_fixtures_match_brute_force_counters() {
        use rand::{seq::SliceRandom, Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(123);
        for _ in 0..20 {
            let n = rng.gen_range(5..40);
            let mut preds = Vec::new();
            let mut golds = Vec::new();
            for _ in 0..n {
                let mut ranking: Vec<TokenId> = (0..30).collect();
                ranking.shuffle(&mut rng);
                golds.push(if rng.gen_bool(0.9) {
                    ranking[rng.gen_range(0..30)]
                } else {
                    999 // absent
                });
                preds.push(pred(&ranking));
            }
            for k in [1usize, 3, 10] {
                let fast = precision_at_k(&preds, &golds, k).unwrap();
                let brute = preds
                    .iter()
                    .zip(&golds)
                    .filter(|(p, &g)| p.top_tokens(k).contains(&g))
                    .count() as f64
                    / n as f64;
                assert!((fast - brute).abs() < 1e-12);
            }
            let fast = mrr(&preds, &golds).unwrap();
            let mut brute = 0.0;
            for (p, &g) in preds.iter().zip(&golds) {
                let mut rank = 0usize;
                for (i, c) in p.candidates.iter().enumerate() {
                    if c.token == g {
                        rank = i + 1;
                        break;
                    }
                }
                if rank > 0 {
                    brute += 1.0 / rank as f64;
                }
            }
            brute /= n as f64;
            assert!((fast - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_bounds_hold() {
        use rand::{seq::SliceRandom, Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.gen_range(1..30);
            let ranks: Vec<Option<usize>> = (0..n)
                .map(|_| {
                    let mut r: Vec<usize> = (1..=20).collect();
                    r.shuffle(&mut rng);
                    rng.gen_bool(0.85).then_some(r[0])
                })
                .collect();
            let m = Metrics::from_ranks(&ranks).unwrap();
            assert!(m.p_at_1 <= m.p_at_10, "monotone in k");
            assert!(m.p_at_1 <= m.mrr + 1e-12 && m.mrr <= 1.0, "p1 {} mrr {}", m.p_at_1, m.mrr);
        }
    }

    #[test]
    fn empty_input_is_none_not_nan() {
        assert!(Metrics::from_ranks(&[]).is_none());
    }
}
