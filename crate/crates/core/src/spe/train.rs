//! Probe training: the joint object/subject objective over prompt-encoder
//! parameters, with optional backbone finetuning and dev-P@1 early stopping.
//!
//! Per triple the loss is
//!   -[ log p(gold | object prompt) + lambda * mean_j log p(subject_j | sym prompt_j) ]
//! summed over the batch. The symmetric prompts fill the gold object and
//! mask subject tokens one at a time.

use crate::corpus::FactDataset;
use crate::error::{Error, Result};
use crate::mlm::{MaskLoss, Mlm, MlmWeights, TokenId};
use crate::optim::Adam;
use crate::prompt::{assemble_orig, assemble_sym, PromptEncoder};
use crate::scalar::Scalar;
use crate::spe::config::SpeConfig;
use crate::spe::predict::{predict, triple_query};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-triple joint loss over the epoch.
    pub train_loss: f64,
    pub dev_p1: f64,
}

pub struct ProbeTrainOutcome<S> {
    /// Best-dev prompt encoder.
    pub encoder: PromptEncoder<S>,
    /// Best-dev backbone; `Some` only when finetuning was enabled.
    pub mlm: Option<Mlm<S>>,
    pub log: Vec<EpochLog>,
    pub best_dev_p1: f64,
    pub best_epoch: usize,
}

/// Joint loss for one triple under the current parameters. Used by the
/// finite-difference checks; the training loop computes the same quantity
/// alongside its backward pass.
pub fn triple_loss<S: Scalar>(
    mlm: &Mlm<S>,
    encoder: &PromptEncoder<S>,
    relation: usize,
    subject: &[TokenId],
    gold: TokenId,
    lambda: f64,
) -> Result<S> {
    let (vectors, _) = encoder.encode(relation)?;
    let p_orig = assemble_orig(&encoder.template, &vectors, subject, mlm)?;
    let fwd = mlm.forward(&p_orig.slots)?;
    let mut loss = fwd.loss(&[MaskLoss {
        position: p_orig.mask_position,
        target: gold,
        weight: S::one(),
    }])?;
    if lambda > 0.0 {
        let w = S::from_f64(lambda / subject.len() as f64);
        for j in 0..subject.len() {
            let p_sym = assemble_sym(&encoder.template, &vectors, gold, subject, j, mlm)?;
            let fwd = mlm.forward(&p_sym.slots)?;
            loss += fwd.loss(&[MaskLoss {
                position: p_sym.mask_position,
                target: subject[j],
                weight: w,
            }])?;
        }
    }
    Ok(loss)
}

/// Loss plus gradient accumulation for one triple. Backbone gradients are
/// accumulated only when `mlm_grads` is provided.
fn triple_grads<S: Scalar>(
    mlm: &Mlm<S>,
    encoder: &PromptEncoder<S>,
    relation: usize,
    subject: &[TokenId],
    gold: TokenId,
    lambda: f64,
    enc_grads: &mut PromptEncoder<S>,
    mut mlm_grads: Option<&mut MlmWeights<S>>,
) -> Result<S> {
    let (vectors, enc_cache) = encoder.encode(relation)?;
    let mut d_vectors = vec![vec![S::zero(); encoder.dim]; vectors.len()];
    let mut loss = S::zero();

    let run_prompt = |prompt: &crate::prompt::AssembledPrompt<S>,
                          target: TokenId,
                          weight: S,
                          mlm_grads: Option<&mut MlmWeights<S>>,
                          d_vectors: &mut [Vec<S>]|
     -> Result<S> {
        let fwd = mlm.forward(&prompt.slots)?;
        let losses = [MaskLoss {
            position: prompt.mask_position,
            target,
            weight,
        }];
        let l = fwd.loss(&losses)?;
        let input_grads = mlm.backward(&prompt.slots, &fwd, &losses, mlm_grads)?;
        for (vi, &pos) in prompt.vector_positions.iter().enumerate() {
            let g = input_grads.by_slot[pos]
                .as_ref()
                .expect("template vector slots carry gradients");
            for (acc, &gv) in d_vectors[vi].iter_mut().zip(g) {
                *acc += gv;
            }
        }
        Ok(l)
    };

    let p_orig = assemble_orig(&encoder.template, &vectors, subject, mlm)?;
    loss += run_prompt(
        &p_orig,
        gold,
        S::one(),
        mlm_grads.as_deref_mut(),
        &mut d_vectors,
    )?;

    if lambda > 0.0 {
        let w = S::from_f64(lambda / subject.len() as f64);
        for j in 0..subject.len() {
            let p_sym = assemble_sym(&encoder.template, &vectors, gold, subject, j, mlm)?;
            loss += run_prompt(&p_sym, subject[j], w, mlm_grads.as_deref_mut(), &mut d_vectors)?;
        }
    }

    encoder.backward(&enc_cache, &d_vectors, enc_grads);
    Ok(loss)
}

fn dev_p_at_1<S: Scalar>(
    mlm: &Mlm<S>,
    encoder: &PromptEncoder<S>,
    dataset: &FactDataset,
    queries: &[(usize, usize, Vec<TokenId>, TokenId)],
    config: &SpeConfig,
) -> Result<f64> {
    let mut hits = 0usize;
    for (idx, enc_rel, subject, gold) in queries {
        let t = &dataset.triples[*idx];
        let pred = predict(mlm, encoder, *enc_rel, t.relation, subject, config)?;
        if pred.chosen() == *gold {
            hits += 1;
        }
    }
    Ok(hits as f64 / queries.len().max(1) as f64)
}

/// Called whenever dev P@1 improves; receives the new best state. Lets the
/// driver persist checkpoints so an interrupted run keeps its last best.
pub type ImprovementHook<'a, S> =
    &'a mut dyn FnMut(&PromptEncoder<S>, Option<&Mlm<S>>, &EpochLog) -> Result<()>;

/// Trains the prompt encoder (and optionally the backbone) on the train
/// split, early-stopping on dev P@1, returning the best-dev state.
pub fn train<S: Scalar>(
    dataset: &FactDataset,
    mlm: &Mlm<S>,
    encoder: &PromptEncoder<S>,
    config: &SpeConfig,
    seed: u64,
) -> Result<ProbeTrainOutcome<S>> {
    train_with_hook(dataset, mlm, encoder, config, seed, None)
}

/// `train` plus an optional per-improvement callback.
pub fn train_with_hook<S: Scalar>(
    dataset: &FactDataset,
    mlm: &Mlm<S>,
    encoder: &PromptEncoder<S>,
    config: &SpeConfig,
    seed: u64,
    mut hook: Option<ImprovementHook<'_, S>>,
) -> Result<ProbeTrainOutcome<S>> {
    config.validate(mlm.vocab.len())?;
    if dataset.splits.train.is_empty() {
        return Err(Error::config("empty training split"));
    }
    if dataset.splits.dev.is_empty() {
        return Err(Error::config("empty dev split (needed for early stopping)"));
    }

    let queries_of = |indices: &[usize], enc: &PromptEncoder<S>| -> Result<Vec<(usize, usize, Vec<TokenId>, TokenId)>> {
        indices
            .iter()
            .map(|&i| {
                let t = &dataset.triples[i];
                let enc_rel = enc.relation_index(&dataset.relation(t.relation).id)?;
                let (subject, gold) = triple_query(mlm, dataset, i);
                Ok((i, enc_rel, subject, gold))
            })
            .collect()
    };
    let train_queries = queries_of(&dataset.splits.train, encoder)?;
    let dev_queries = queries_of(&dataset.splits.dev, encoder)?;

    let mut enc = encoder.clone();
    let mut mlm_work = mlm.clone();
    let mut enc_grads = enc.zeros_like();
    let mut mlm_grads = config
        .finetune_backbone
        .then(|| MlmWeights::zeros(&mlm.config, mlm.vocab.len()));
    let mut opt_enc: Adam<S> = Adam::new(config.lr);
    let mut opt_mlm: Adam<S> = Adam::new(config.lr);

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x517e_d1ce));
    let mut order: Vec<usize> = (0..train_queries.len()).collect();

    let mut log = Vec::new();
    let mut best_dev = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_enc = enc.clone();
    let mut best_mlm: Option<Mlm<S>> = None;
    let mut stale = 0usize;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        for chunk in order.chunks(config.batch_size) {
            enc_grads.fill_zero();
            if let Some(g) = mlm_grads.as_mut() {
                g.fill_zero();
            }
            let mut batch_loss = S::zero();
            for &qi in chunk {
                let (_, enc_rel, subject, gold) = &train_queries[qi];
                batch_loss += triple_grads(
                    &mlm_work,
                    &enc,
                    *enc_rel,
                    subject,
                    *gold,
                    config.lambda,
                    &mut enc_grads,
                    mlm_grads.as_mut(),
                )?;
            }
            let bl = batch_loss.as_f64();
            if !bl.is_finite() {
                return Err(Error::numeric(format!("non-finite probe loss {bl}")));
            }
            epoch_loss += bl;
            opt_enc.step(enc.named_arrays_mut(), &enc_grads.named_arrays());
            if let Some(g) = &mlm_grads {
                opt_mlm.step(mlm_work.weights.named_arrays_mut(), &g.named_arrays());
            }
        }

        let dev_p1 = dev_p_at_1(&mlm_work, &enc, dataset, &dev_queries, config)?;
        log.push(EpochLog {
            epoch,
            train_loss: epoch_loss / train_queries.len() as f64,
            dev_p1,
        });

        if dev_p1 > best_dev {
            best_dev = dev_p1;
            best_epoch = epoch;
            best_enc = enc.clone();
            if config.finetune_backbone {
                best_mlm = Some(mlm_work.clone());
            }
            if let Some(h) = hook.as_mut() {
                h(&best_enc, best_mlm.as_ref(), log.last().unwrap())?;
            }
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    Ok(ProbeTrainOutcome {
        encoder: best_enc,
        mlm: best_mlm,
        log,
        best_dev_p1: best_dev,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen_kb, render_corpus, CorpusConfig};
    use crate::mlm::{MlmConfig, Vocab};
    use crate::prompt::Template;

    fn fixture(dim: usize) -> (Mlm<f64>, PromptEncoder<f64>, FactDataset) {
        let cfg = CorpusConfig::from_toml_str(
            r#"
            [[entity_types]]
            name = "person"
            count = 30
            surface_len = [1, 2]
            [[entity_types]]
            name = "place"
            count = 6
            surface_len = [1, 1]
            [[relations]]
            id = "origin"
            subject_type = "person"
            answer_type = "place"
            triples = 20
            distractors = 2
            [splits]
            train = 0.6
            dev = 0.2
            test = 0.2
            "#,
        )
        .unwrap();
        let ds = gen_kb(&cfg, 3).unwrap();
        let corpus = render_corpus(&ds, &cfg, 3).unwrap();
        let vocab = Vocab::from_corpus(&corpus);
        let mlm = Mlm::new(
            vocab,
            MlmConfig {
                layers: 2,
                heads: 2,
                dim,
                ff_dim: 2 * dim,
                max_seq: 20,
                tied_output: true,
            },
            8,
        )
        .unwrap();
        let enc = PromptEncoder::new(Template::default(), dim, vec!["origin".into()], 4).unwrap();
        (mlm, enc, ds)
    }

    fn quick_cfg(lambda: f64) -> SpeConfig {
        SpeConfig {
            lambda,
            k: 3,
            batch_size: 4,
            lr: 1e-3,
            patience: 3,
            max_epochs: 4,
            ..SpeConfig::default()
        }
    }

    #[test]
    fn lambda_zero_loss_is_pure_object_cross_entropy() {
        let (mlm, enc, ds) = fixture(16);
        let (subject, gold) = triple_query(&mlm, &ds, ds.splits.train[0]);
        let loss = triple_loss(&mlm, &enc, 0, &subject, gold, 0.0).unwrap();
        // Oracle: direct forward on the object prompt.
        let (vectors, _) = enc.encode(0).unwrap();
        let p = assemble_orig(&enc.template, &vectors, &subject, &mlm).unwrap();
        let fwd = mlm.forward(&p.slots).unwrap();
        let ce = -fwd.log_probs_at(p.mask_position).unwrap()[gold];
        assert!((loss - ce).abs() < 1e-12, "loss {loss} vs ce {ce}");
    }

    #[test]
    fn joint_loss_gradient_matches_finite_differences() {
        let (mlm, mut enc, ds) = fixture(16);
        let (subject, gold) = triple_query(&mlm, &ds, ds.splits.train[0]);
        assert!(subject.len() >= 1);
        let lambda = 0.8;

        let mut enc_grads = enc.zeros_like();
        triple_grads(&mlm, &enc, 0, &subject, gold, lambda, &mut enc_grads, None).unwrap();

        let h = 1e-4;
        let seed_grad = enc_grads.seeds[0].clone();
        for probe in 0..30 {
            let r = (probe * 37) % seed_grad.rows;
            let c = (probe * 17) % seed_grad.cols;
            let orig = enc.seeds[0].row(r)[c];
            enc.seeds[0].row_mut(r)[c] = orig + h;
            let up = triple_loss(&mlm, &enc, 0, &subject, gold, lambda).unwrap();
            enc.seeds[0].row_mut(r)[c] = orig - h;
            let down = triple_loss(&mlm, &enc, 0, &subject, gold, lambda).unwrap();
            enc.seeds[0].row_mut(r)[c] = orig;
            let num = (up - down) / (2.0 * h);
            let ana = seed_grad.row(r)[c];
            let denom = num.abs().max(ana.abs()).max(1e-7);
            assert!(
                (num - ana).abs() / denom < 1e-3,
                "seed[{r},{c}]: fd {num} vs analytic {ana}"
            );
        }
    }

    #[test]
    fn frozen_backbone_stays_bit_identical() {
        let (mlm, enc, ds) = fixture(12);
        let before = mlm.weights.clone();
        let out = train(&ds, &mlm, &enc, &quick_cfg(0.8), 1).unwrap();
        assert!(out.mlm.is_none(), "frozen run must not return a backbone");
        assert_eq!(mlm.weights, before);
    }

    #[test]
    fn finetune_returns_changed_backbone() {
        let (mlm, enc, ds) = fixture(12);
        let cfg = SpeConfig {
            finetune_backbone: true,
            ..quick_cfg(0.8)
        };
        let out = train(&ds, &mlm, &enc, &cfg, 1).unwrap();
        let tuned = out.mlm.expect("finetuned backbone returned");
        assert_ne!(tuned.weights, mlm.weights);
    }

    #[test]
    fn same_seed_same_weights() {
        let (mlm, enc, ds) = fixture(12);
        let a = train(&ds, &mlm, &enc, &quick_cfg(0.8), 9).unwrap();
        let b = train(&ds, &mlm, &enc, &quick_cfg(0.8), 9).unwrap();
        assert_eq!(a.encoder, b.encoder);
        assert_eq!(a.best_dev_p1, b.best_dev_p1);
    }

    #[test]
    fn early_stopping_respects_patience() {
        let (mlm, enc, ds) = fixture(12);
        // A learning rate this small cannot move dev P@1, so training stops
        // after the first epoch plus `patience` stale ones.
        let cfg = SpeConfig {
            lambda: 0.0,
            k: 1,
            batch_size: 8,
            lr: 1e-15,
            patience: 2,
            max_epochs: 50,
            ..SpeConfig::default()
        };
        let out = train(&ds, &mlm, &enc, &cfg, 2).unwrap();
        assert_eq!(out.log.len(), 1 + cfg.patience);
        assert_eq!(out.best_epoch, 0);
    }

    #[test]
    fn empty_train_split_errors() {
        let (mlm, enc, mut ds) = fixture(12);
        ds.splits.dev.extend(ds.splits.train.drain(..));
        assert!(train(&ds, &mlm, &enc, &quick_cfg(0.8), 1).is_err());
    }

    #[test]
    fn empty_dev_split_errors() {
        let (mlm, enc, mut ds) = fixture(12);
        ds.splits.train.extend(ds.splits.dev.drain(..));
        assert!(train(&ds, &mlm, &enc, &quick_cfg(0.8), 1).is_err());
    }
}
