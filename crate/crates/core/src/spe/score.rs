//! Forward object scoring, symmetric subject scoring, and top-K selection.

use crate::error::{Error, Result};
use crate::linalg::log_sum_exp;
use crate::mlm::{Mlm, TokenId};
use crate::prompt::{assemble_sym, AssembledPrompt, PromptKind, Template};
use crate::scalar::Scalar;

/// Log-probabilities over the (possibly restricted) answer vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerDistribution<S> {
    /// Ascending token ids.
    pub token_ids: Vec<TokenId>,
    pub log_probs: Vec<S>,
}

impl<S: Scalar> AnswerDistribution<S> {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn log_prob_of(&self, token: TokenId) -> Option<S> {
        self.token_ids
            .binary_search(&token)
            .ok()
            .map(|i| self.log_probs[i])
    }
}

/// Object distribution at the object blank of an object-predicting prompt,
/// restricted to `answer_vocab` and renormalized when a restriction is
/// given. Single-token objects make length normalization a no-op here.
pub fn score_object<S: Scalar>(
    mlm: &Mlm<S>,
    prompt: &AssembledPrompt<S>,
    answer_vocab: Option<&[TokenId]>,
) -> Result<AnswerDistribution<S>> {
    if prompt.kind != PromptKind::Orig {
        return Err(Error::config("score_object expects an object-predicting prompt"));
    }
    let fwd = mlm.forward(&prompt.slots)?;
    let full = fwd
        .log_probs_at(prompt.mask_position)
        .ok_or_else(|| Error::numeric("prompt mask position missing from forward output"))?;
    match answer_vocab {
        None => Ok(AnswerDistribution {
            token_ids: (0..full.len()).collect(),
            log_probs: full.to_vec(),
        }),
        Some(ids) => {
            let picked: Vec<S> = ids.iter().map(|&t| full[t]).collect();
            let norm = log_sum_exp(&picked);
            Ok(AnswerDistribution {
                token_ids: ids.to_vec(),
                log_probs: picked.into_iter().map(|lp| lp - norm).collect(),
            })
        }
    }
}

/// Mean masked log pseudo-likelihood of the subject given a candidate at
/// the object blank: one symmetric prompt per subject token, each masking
/// that token, averaged. The mean is the input-length normalization.
pub fn score_subject<S: Scalar>(
    mlm: &Mlm<S>,
    template: &Template,
    vectors: &[Vec<S>],
    subject: &[TokenId],
    candidate: TokenId,
) -> Result<S> {
    if subject.is_empty() {
        return Err(Error::config("empty subject"));
    }
    let mut total = S::zero();
    for j in 0..subject.len() {
        let prompt = assemble_sym(template, vectors, candidate, subject, j, mlm)?;
        let fwd = mlm.forward(&prompt.slots)?;
        let lp = fwd
            .log_probs_at(prompt.mask_position)
            .ok_or_else(|| Error::numeric("sym prompt mask position missing"))?;
        total += lp[subject[j]];
    }
    Ok(total / S::from_usize(subject.len()))
}

/// The `k` most probable answers: descending log-probability, ties broken
/// by ascending token id; all answers when the vocabulary is smaller.
pub fn topk_candidates<S: Scalar>(
    dist: &AnswerDistribution<S>,
    k: usize,
) -> Result<Vec<(TokenId, S)>> {
    if k == 0 {
        return Err(Error::config("k must be >= 1"));
    }
    let mut items: Vec<(TokenId, S)> = dist
        .token_ids
        .iter()
        .copied()
        .zip(dist.log_probs.iter().copied())
        .collect();
    let better = |a: &(TokenId, S), b: &(TokenId, S)| -> std::cmp::Ordering {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    };
    if k < items.len() {
        items.select_nth_unstable_by(k - 1, better);
        items.truncate(k);
    }
    items.sort_by(better);
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlm::{MlmConfig, Vocab};
    use crate::prompt::{assemble_orig, PromptEncoder};

    fn setup() -> (Mlm<f64>, PromptEncoder<f64>) {
        let vocab = Vocab::build((0..20).map(|i| format!("w{i}")));
        let config = MlmConfig {
            layers: 1,
            heads: 2,
            dim: 8,
            ff_dim: 16,
            max_seq: 16,
            tied_output: true,
        };
        let mlm = Mlm::new(vocab, config, 11).unwrap();
        let enc = PromptEncoder::new(Template::default(), 8, vec!["r".into()], 3).unwrap();
        (mlm, enc)
    }

    #[test]
    fn unrestricted_equals_raw_forward() {
        let (mlm, enc) = setup();
        let (vectors, _) = enc.encode(0).unwrap();
        let p = assemble_orig(&enc.template, &vectors, &[5], &mlm).unwrap();
        let dist = score_object(&mlm, &p, None).unwrap();
        let fwd = mlm.forward(&p.slots).unwrap();
        let raw = fwd.log_probs_at(p.mask_position).unwrap();
        assert_eq!(dist.log_probs, raw.to_vec());
        assert_eq!(dist.token_ids, (0..mlm.vocab.len()).collect::<Vec<_>>());
    }

    #[test]
    fn restricted_distribution_renormalizes() {
        let (mlm, enc) = setup();
        let (vectors, _) = enc.encode(0).unwrap();
        let p = assemble_orig(&enc.template, &vectors, &[5], &mlm).unwrap();
        let ids = vec![3usize, 7, 9, 12, 15];
        let dist = score_object(&mlm, &p, Some(&ids)).unwrap();
        let total: f64 = dist.log_probs.iter().map(|lp| lp.exp()).sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn restricted_argmax_matches_brute_force() {
        let (mlm, enc) = setup();
        let (vectors, _) = enc.encode(0).unwrap();
        let p = assemble_orig(&enc.template, &vectors, &[5], &mlm).unwrap();
        let ids = vec![3usize, 7, 9, 12, 15];
        let dist = score_object(&mlm, &p, Some(&ids)).unwrap();
        let best = topk_candidates(&dist, 1).unwrap()[0].0;
        let fwd = mlm.forward(&p.slots).unwrap();
        let raw = fwd.log_probs_at(p.mask_position).unwrap();
        let brute = ids
            .iter()
            .copied()
            .max_by(|&a, &b| raw[a].partial_cmp(&raw[b]).unwrap())
            .unwrap();
        assert_eq!(best, brute);
    }

    #[test]
    fn single_token_subject_score_is_single_log_prob() {
        let (mlm, enc) = setup();
        let (vectors, _) = enc.encode(0).unwrap();
        let subject = [5usize];
        let candidate = 9usize;
        let s = score_subject(&mlm, &enc.template, &vectors, &subject, candidate).unwrap();
        let prompt = assemble_sym(&enc.template, &vectors, candidate, &subject, 0, &mlm).unwrap();
        let fwd = mlm.forward(&prompt.slots).unwrap();
        let lp = fwd.log_probs_at(prompt.mask_position).unwrap()[5];
        assert_eq!(s, lp);
    }

    #[test]
    fn multi_token_subject_score_is_mean() {
        let (mlm, enc) = setup();
        let (vectors, _) = enc.encode(0).unwrap();
        let subject = [5usize, 6, 8];
        let candidate = 9usize;
        let s = score_subject(&mlm, &enc.template, &vectors, &subject, candidate).unwrap();
        // Independent oracle: assemble each sym prompt by hand and average.
        let mut acc = 0.0;
        for j in 0..subject.len() {
            let prompt =
                assemble_sym(&enc.template, &vectors, candidate, &subject, j, &mlm).unwrap();
            let fwd = mlm.forward(&prompt.slots).unwrap();
            acc += fwd.log_probs_at(prompt.mask_position).unwrap()[subject[j]];
        }
        let oracle = acc / subject.len() as f64;
        assert!((s - oracle).abs() < 1e-12);
    }

    #[test]
    fn empty_subject_errors() {
        let (mlm, enc) = setup();
        let (vectors, _) = enc.encode(0).unwrap();
        assert!(score_subject(&mlm, &enc.template, &vectors, &[], 3).is_err());
    }

    #[test]
    fn topk_singleton_is_argmax() {
        let dist = AnswerDistribution {
            token_ids: vec![0, 1, 2, 3],
            log_probs: vec![-2.0f64, -0.5, -1.0, -3.0],
        };
        let top = topk_candidates(&dist, 1).unwrap();
        assert_eq!(top, vec![(1, -0.5)]);
    }

    #[test]
    fn uniform_ties_break_to_lowest_ids() {
        let dist = AnswerDistribution {
            token_ids: vec![4, 7, 9, 11],
            log_probs: vec![-1.386f64; 4],
        };
        let top = topk_candidates(&dist, 2).unwrap();
        assert_eq!(top.iter().map(|c| c.0).collect::<Vec<_>>(), vec![4, 7]);
    }

    #[test]
    fn k_larger_than_vocab_returns_all() {
        let dist = AnswerDistribution {
            token_ids: vec![0, 1],
            log_probs: vec![-0.5f64, -1.0],
        };
        assert_eq!(topk_candidates(&dist, 10).unwrap().len(), 2);
    }

    #[test]
    fn topk_matches_full_sort_oracle_on_random_inputs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for trial in 0..50 {
            let n = 100;
            let log_probs: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..0.0)).collect();
            let dist = AnswerDistribution {
                token_ids: (0..n).collect(),
                log_probs,
            };
            let k = rng.gen_range(1..=n);
            let fast = topk_candidates(&dist, k).unwrap();
            // Oracle: full sort then truncate.
            let mut all: Vec<(usize, f64)> = dist
                .token_ids
                .iter()
                .copied()
                .zip(dist.log_probs.iter().copied())
                .collect();
            all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            all.truncate(k);
            assert_eq!(fast, all, "trial {trial}");
        }
    }
}
