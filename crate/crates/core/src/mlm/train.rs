//! Masked-token pretraining for the backbone.
//!
//! Selection works over maskable units: a recorded entity span is one unit,
//! every other token is its own unit. Selected units get the usual
//! 80/10/10 mask/random/keep treatment per token. Masking whole entities
//! keeps multi-token facts learnable in both directions.

use crate::corpus::render::TextCorpus;
use crate::error::{Error, Result};
use crate::mlm::config::{MlmConfig, MlmTrainConfig};
use crate::mlm::model::{MaskLoss, Mlm, MlmWeights};
use crate::mlm::slots::SlotSequence;
use crate::mlm::vocab::{TokenId, Vocab};
use crate::optim::Adam;
use crate::scalar::Scalar;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct MlmTrainOutcome<S> {
    pub mlm: Mlm<S>,
    /// Mean masked-token cross-entropy of the last epoch.
    pub final_loss: f64,
    pub epoch_losses: Vec<f64>,
}

struct PreppedSentence {
    ids: Vec<TokenId>,
    /// (start, len) maskable units covering the sentence.
    units: Vec<(usize, usize)>,
}

fn prep_sentences(corpus: &TextCorpus, vocab: &Vocab, max_seq: usize) -> Result<Vec<PreppedSentence>> {
    let mut out = Vec::with_capacity(corpus.sentences.len());
    for (si, s) in corpus.sentences.iter().enumerate() {
        let mut ids = Vec::with_capacity(s.tokens.len());
        for tok in &s.tokens {
            let id = vocab.get(tok).ok_or_else(|| {
                Error::config(format!(
                    "sentence {si}: token {tok:?} missing from vocabulary (vocab/corpus mismatch)"
                ))
            })?;
            ids.push(id);
        }
        ids.truncate(max_seq);
        let mut covered = vec![false; ids.len()];
        let mut units = Vec::new();
        for &(start, len) in &s.entity_spans {
            if len == 0 || start + len > ids.len() {
                continue; // span truncated away
            }
            units.push((start, len));
            covered[start..start + len].iter_mut().for_each(|c| *c = true);
        }
        for (i, c) in covered.iter().enumerate() {
            if !c {
                units.push((i, 1));
            }
        }
        units.sort_unstable();
        if !ids.is_empty() {
            out.push(PreppedSentence { ids, units });
        }
    }
    Ok(out)
}

struct MaskedExample {
    input: Vec<TokenId>,
    /// (position, original token) pairs to predict.
    targets: Vec<(usize, TokenId)>,
}

fn mask_sentence<R: Rng>(
    s: &PreppedSentence,
    vocab: &Vocab,
    rate: f64,
    rng: &mut R,
) -> MaskedExample {
    let mut selected: Vec<usize> = (0..s.units.len())
        .filter(|_| rng.gen::<f64>() < rate)
        .collect();
    if selected.is_empty() {
        selected.push(rng.gen_range(0..s.units.len()));
    }
    // Selected tokens become `[MASK]` outright: probing always queries
    // through mask slots, so corrupt/keep variants would train positions
    // the scoring interface never reads.
    let mut input = s.ids.clone();
    let mut targets = Vec::new();
    for &u in &selected {
        let (start, len) = s.units[u];
        for p in start..start + len {
            targets.push((p, s.ids[p]));
            input[p] = vocab.mask_id();
        }
    }
    MaskedExample { input, targets }
}

/// Pretrains a fresh backbone on the corpus. Deterministic in
/// (corpus, vocab, configs, seed).
pub fn train_mlm<S: Scalar>(
    corpus: &TextCorpus,
    vocab: &Vocab,
    arch: &MlmConfig,
    train: &MlmTrainConfig,
    seed: u64,
) -> Result<MlmTrainOutcome<S>> {
    arch.validate()?;
    train.validate()?;
    if corpus.sentences.is_empty() {
        return Err(Error::config("cannot pretrain on an empty corpus"));
    }
    let sentences = prep_sentences(corpus, vocab, arch.max_seq)?;

    let mut mlm: Mlm<S> = Mlm::new(vocab.clone(), arch.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e3779b97f4a7c15));
    let mut opt: Adam<S> = Adam::new(train.lr);
    let mut grads = MlmWeights::zeros(arch, vocab.len());

    let mut epoch_losses = Vec::with_capacity(train.epochs);
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    for _epoch in 0..train.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        let mut batches = 0usize;
        for chunk in order.chunks(train.batch_size) {
            let examples: Vec<MaskedExample> = chunk
                .iter()
                .map(|&i| mask_sentence(&sentences[i], vocab, train.mask_rate, &mut rng))
                .collect();
            let n_targets: usize = examples.iter().map(|e| e.targets.len()).sum();
            if n_targets == 0 {
                continue;
            }
            let w = S::from_f64(1.0 / n_targets as f64);
            grads.fill_zero();
            let mut batch_loss = S::zero();
            for ex in &examples {
                let input = SlotSequence::from_token_ids(&ex.input, vocab)?;
                let losses: Vec<MaskLoss<S>> = ex
                    .targets
                    .iter()
                    .map(|&(p, t)| MaskLoss {
                        position: p,
                        target: t,
                        weight: w,
                    })
                    .collect();
                if losses.is_empty() {
                    continue;
                }
                let fwd = mlm.forward(&input)?;
                batch_loss += fwd.loss(&losses)?;
                mlm.backward(&input, &fwd, &losses, Some(&mut grads))?;
            }
            let bl = batch_loss.as_f64();
            if !bl.is_finite() {
                return Err(Error::numeric(format!("non-finite pretraining loss {bl}")));
            }
            epoch_loss += bl;
            batches += 1;
            opt.step(mlm.weights.named_arrays_mut(), &grads.named_arrays());
        }
        epoch_losses.push(epoch_loss / batches.max(1) as f64);
    }

    let final_loss = *epoch_losses.last().unwrap_or(&f64::NAN);
    Ok(MlmTrainOutcome {
        mlm,
        final_loss,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::render::Sentence;

    fn fact_corpus(n: usize) -> TextCorpus {
        // n facts "s_i likes o_i", entity spans marked.
        let sentences: Vec<Sentence> = (0..n)
            .map(|i| Sentence {
                tokens: vec![format!("s{i}"), "likes".into(), format!("o{i}")],
                entity_spans: vec![(0, 1), (2, 1)],
            })
            .collect();
        TextCorpus {
            kinds: vec![],
            sentences,
        }
    }

    fn small_arch() -> MlmConfig {
        MlmConfig {
            layers: 2,
            heads: 2,
            dim: 32,
            ff_dim: 64,
            max_seq: 8,
            tied_output: true,
        }
    }

    #[test]
    fn empty_corpus_errors() {
        let corpus = TextCorpus::default();
        let vocab = Vocab::build(["a".to_string()]);
        let r = train_mlm::<f64>(&corpus, &vocab, &small_arch(), &MlmTrainConfig::default(), 1);
        assert!(r.is_err());
    }

    #[test]
    fn mismatched_vocab_errors() {
        let corpus = fact_corpus(3);
        let vocab = Vocab::build(["unrelated".to_string()]);
        let r = train_mlm::<f64>(&corpus, &vocab, &small_arch(), &MlmTrainConfig::default(), 1);
        assert!(r.is_err());
    }

    #[test]
    fn loss_decreases_from_initialization() {
        let corpus = fact_corpus(10);
        let vocab = Vocab::from_corpus(&corpus);
        let cfg = MlmTrainConfig {
            epochs: 20,
            batch_size: 10,
            lr: 1e-3,
            mask_rate: 0.3,
        };
        let out = train_mlm::<f64>(&corpus, &vocab, &small_arch(), &cfg, 3).unwrap();
        assert!(
            out.final_loss < out.epoch_losses[0],
            "final {} vs first {}",
            out.final_loss,
            out.epoch_losses[0]
        );
    }

    #[test]
    fn same_seed_gives_identical_parameters() {
        let corpus = fact_corpus(6);
        let vocab = Vocab::from_corpus(&corpus);
        let cfg = MlmTrainConfig {
            epochs: 3,
            batch_size: 4,
            lr: 1e-3,
            mask_rate: 0.2,
        };
        let a = train_mlm::<f64>(&corpus, &vocab, &small_arch(), &cfg, 5).unwrap();
        let b = train_mlm::<f64>(&corpus, &vocab, &small_arch(), &cfg, 5).unwrap();
        assert_eq!(a.mlm.weights, b.mlm.weights);
    }

    #[test]
    fn memorizes_twenty_facts() {
        let corpus = fact_corpus(20);
        let vocab = Vocab::from_corpus(&corpus);
        let cfg = MlmTrainConfig {
            epochs: 200,
            batch_size: 4,
            lr: 2e-3,
            mask_rate: 0.3,
        };
        let out = train_mlm::<f64>(&corpus, &vocab, &small_arch(), &cfg, 7).unwrap();
        let mlm = &out.mlm;
        let mut correct = 0;
        for i in 0..20 {
            let ids = vec![
                vocab.get(&format!("s{i}")).unwrap(),
                vocab.get("likes").unwrap(),
                vocab.mask_id(),
            ];
            let input = SlotSequence::from_token_ids(&ids, &vocab).unwrap();
            let fwd = mlm.forward(&input).unwrap();
            let lp = fwd.log_probs_at(2).unwrap();
            let argmax = (0..lp.len()).max_by(|&a, &b| lp[a].partial_cmp(&lp[b]).unwrap()).unwrap();
            if argmax == vocab.get(&format!("o{i}")).unwrap() {
                correct += 1;
            }
        }
        assert!(correct >= 18, "memorized only {correct}/20");
    }
}
