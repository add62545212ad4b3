//! Candidate generation, symmetric reranking, and batch inference.
//!
//! The final ranking is the reranked top-K block (sorted by combined score)
//! followed by the remaining answers in forward order, so metrics beyond
//! rank K stay well-defined. Tail candidates carry a zero symmetric score,
//! keeping `combined = forward + lambda * sym` exact everywhere.

use crate::corpus::{FactDataset, RelationId};
use crate::error::{Error, Result};
use crate::mlm::{Mlm, TokenId};
use crate::prompt::{assemble_orig, PromptEncoder};
use crate::scalar::Scalar;
use crate::spe::config::SpeConfig;
use crate::spe::score::{score_object, score_subject, topk_candidates};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate<S> {
    pub token: TokenId,
    /// Length-normalized log p(token | object prompt); objects are
    /// single-token so the normalization is trivial.
    pub forward_logp: S,
    /// Averaged subject pseudo-likelihood; zero outside the reranked block.
    pub sym_logp: S,
    /// forward_logp + lambda * sym_logp, computed exactly in that form.
    pub combined: S,
    /// Whether this candidate was in the top-K pool and scored symmetrically.
    pub reranked: bool,
}

/// Ranked answers for one (subject, relation) query.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<S> {
    pub subject: Vec<TokenId>,
    pub relation: RelationId,
    /// Block-then-tail ordering; `candidates[0].token` is the chosen answer.
    pub candidates: Vec<Candidate<S>>,
    /// K actually used for the reranked block.
    pub k: usize,
    pub lambda: f64,
}

fn cmp_desc_then_id<S: Scalar>(a: (S, TokenId), b: (S, TokenId)) -> Ordering {
    b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

impl<S: Scalar> Prediction<S> {
    /// The model's answer.
    pub fn chosen(&self) -> TokenId {
        self.candidates[0].token
    }

    /// 1-based rank of `token`, if present in the ranking.
    pub fn rank_of(&self, token: TokenId) -> Option<usize> {
        self.candidates.iter().position(|c| c.token == token).map(|i| i + 1)
    }

    pub fn top_tokens(&self, n: usize) -> Vec<TokenId> {
        self.candidates.iter().take(n).map(|c| c.token).collect()
    }

    /// Re-derives the ranking for a smaller candidate pool `k` and/or a
    /// different lambda, reusing the stored forward and symmetric scores.
    /// Equivalent to a fresh `predict` with those settings; no model calls.
    pub fn with_params(&self, k: usize, lambda: f64) -> Result<Prediction<S>> {
        if k == 0 {
            return Err(Error::config("k must be >= 1"));
        }
        if k > self.k && k < self.candidates.len() {
            return Err(Error::config(format!(
                "cannot grow candidate pool from {} to {k} without rescoring",
                self.k
            )));
        }
        // Recover forward order, which the block+tail construction preserves
        // piecewise: sort everything by forward score.
        let mut forward: Vec<Candidate<S>> = self.candidates.clone();
        forward.sort_by(|a, b| cmp_desc_then_id((a.forward_logp, a.token), (b.forward_logp, b.token)));
        let k_eff = k.min(forward.len());
        let lam = S::from_f64(lambda);
        let mut block: Vec<Candidate<S>> = forward[..k_eff]
            .iter()
            .map(|c| {
                let sym = if lambda == 0.0 { S::zero() } else { c.sym_logp };
                Candidate {
                    token: c.token,
                    forward_logp: c.forward_logp,
                    sym_logp: sym,
                    combined: c.forward_logp + lam * sym,
                    reranked: true,
                }
            })
            .collect();
        block.sort_by(|a, b| cmp_desc_then_id((a.combined, a.token), (b.combined, b.token)));
        let tail: Vec<Candidate<S>> = forward[k_eff..]
            .iter()
            .map(|c| Candidate {
                token: c.token,
                forward_logp: c.forward_logp,
                sym_logp: S::zero(),
                combined: c.forward_logp,
                reranked: false,
            })
            .collect();
        block.extend(tail);
        Ok(Prediction {
            subject: self.subject.clone(),
            relation: self.relation,
            candidates: block,
            k: k_eff,
            lambda,
        })
    }
}

/// Full inference for one query: object distribution, top-K candidate pool,
/// one symmetric prompt family per candidate, combined-score reranking.
pub fn predict<S: Scalar>(
    mlm: &Mlm<S>,
    encoder: &PromptEncoder<S>,
    relation: usize,
    dataset_relation: RelationId,
    subject: &[TokenId],
    config: &SpeConfig,
) -> Result<Prediction<S>> {
    config.validate(mlm.vocab.len())?;
    let (vectors, _) = encoder.encode(relation)?;
    let p_orig = assemble_orig(&encoder.template, &vectors, subject, mlm)?;
    let dist = score_object(mlm, &p_orig, config.answer_vocab.as_deref())?;
    let pool = topk_candidates(&dist, config.k)?;
    let k_eff = pool.len();
    let lam = S::from_f64(config.lambda);

    let mut block: Vec<Candidate<S>> = Vec::with_capacity(k_eff);
    for &(token, forward_logp) in &pool {
        // lambda = 0 keeps the forward ranking exactly; skip the symmetric
        // prompts entirely in that case.
        let sym_logp = if config.lambda == 0.0 {
            S::zero()
        } else {
            score_subject(mlm, &encoder.template, &vectors, subject, token)?
        };
        block.push(Candidate {
            token,
            forward_logp,
            sym_logp,
            combined: forward_logp + lam * sym_logp,
            reranked: true,
        });
    }
    block.sort_by(|a, b| cmp_desc_then_id((a.combined, a.token), (b.combined, b.token)));

    // Tail: everything outside the pool, in forward order.
    let mut rest: Vec<(TokenId, S)> = dist
        .token_ids
        .iter()
        .copied()
        .zip(dist.log_probs.iter().copied())
        .filter(|(t, _)| !pool.iter().any(|(pt, _)| pt == t))
        .collect();
    rest.sort_by(|a, b| cmp_desc_then_id((a.1, a.0), (b.1, b.0)));
    block.extend(rest.into_iter().map(|(token, forward_logp)| Candidate {
        token,
        forward_logp,
        sym_logp: S::zero(),
        combined: forward_logp,
        reranked: false,
    }));

    Ok(Prediction {
        subject: subject.to_vec(),
        relation: dataset_relation,
        candidates: block,
        k: k_eff,
        lambda: config.lambda,
    })
}

/// Subject token ids and gold token id for one triple.
pub fn triple_query<S: Scalar>(
    mlm: &Mlm<S>,
    dataset: &FactDataset,
    triple_idx: usize,
) -> (Vec<TokenId>, TokenId) {
    let t = &dataset.triples[triple_idx];
    let subject = mlm.vocab.encode_tokens(&dataset.entity(t.subject).surface);
    let gold = mlm
        .vocab
        .get(&dataset.entity(t.object).surface[0])
        .unwrap_or_else(|| mlm.vocab.unk_id());
    (subject, gold)
}

/// Deterministic inference over a split, in dataset order. Per-triple
/// outputs equal individual `predict` calls.
pub fn evaluate_split<S: Scalar>(
    mlm: &Mlm<S>,
    encoder: &PromptEncoder<S>,
    dataset: &FactDataset,
    indices: &[usize],
    config: &SpeConfig,
) -> Result<Vec<Prediction<S>>> {
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let t = &dataset.triples[i];
        let rel = encoder.relation_index(&dataset.relation(t.relation).id)?;
        let (subject, _) = triple_query(mlm, dataset, i);
        out.push(predict(mlm, encoder, rel, t.relation, &subject, config)?);
    }
    Ok(out)
}

/// One line of the prediction dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DumpRecord {
    pub subject: String,
    pub relation: String,
    pub gold: String,
    /// 1-based rank of the gold answer in the full ranking, if present.
    pub gold_rank: Option<usize>,
    pub candidates: Vec<DumpCandidate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DumpCandidate {
    pub token: String,
    pub forward_logp: f64,
    pub sym_logp: f64,
    pub combined: f64,
    pub reranked: bool,
}

/// Writes predictions as line-delimited records, truncating the stored
/// candidate list to `top_n` (the full ranking can be vocabulary-sized).
pub fn write_predictions<S: Scalar>(
    path: &Path,
    mlm: &Mlm<S>,
    dataset: &FactDataset,
    indices: &[usize],
    predictions: &[Prediction<S>],
    top_n: usize,
) -> Result<()> {
    if indices.len() != predictions.len() {
        return Err(Error::config("indices/predictions length mismatch"));
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (&i, pred) in indices.iter().zip(predictions) {
        let t = &dataset.triples[i];
        let (_, gold) = triple_query(mlm, dataset, i);
        let rec = DumpRecord {
            subject: dataset.entity(t.subject).surface_text(),
            relation: dataset.relation(t.relation).id.clone(),
            gold: dataset.entity(t.object).surface_text(),
            gold_rank: pred.rank_of(gold),
            candidates: pred
                .candidates
                .iter()
                .take(top_n)
                .map(|c| DumpCandidate {
                    token: mlm.vocab.token(c.token).to_string(),
                    forward_logp: c.forward_logp.as_f64(),
                    sym_logp: c.sym_logp.as_f64(),
                    combined: c.combined.as_f64(),
                    reranked: c.reranked,
                })
                .collect(),
        };
        writeln!(out, "{}", serde_json::to_string(&rec).unwrap())?;
    }
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<DumpRecord>> {
    let file = std::fs::File::open(path)?;
    let path_str = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::format(&path_str, Some(i + 1), e.to_string()))?,
        );
    }
    Ok(out)
}
