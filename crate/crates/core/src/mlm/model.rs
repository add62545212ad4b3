//! Tiny bidirectional transformer masked LM with handwritten backprop.
//!
//! The backbone exposes exactly what probing needs: log-probability
//! distributions at mask positions, embedding lookup, and gradients with
//! respect to raw-vector input slots while its own parameters stay fixed.
//! Parameter gradients are only accumulated when a gradient buffer is
//! passed in (pretraining / backbone-finetuning paths).
//!
//! Layout: learned token + position embeddings -> LayerNorm -> L pre-norm
//! blocks (multi-head attention, GELU feed-forward) -> final LayerNorm ->
//! output projection (tied to the embedding table by default) + bias.

use crate::error::{Error, Result};
use crate::linalg::{log_softmax, matvec_acc, matvec_bwd_input, matvec_bwd_weight, Mat};
use crate::mlm::config::MlmConfig;
use crate::mlm::slots::{Slot, SlotSequence};
use crate::mlm::vocab::{TokenId, Vocab};
use crate::scalar::Scalar;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams<S> {
    pub gamma: Vec<S>,
    pub beta: Vec<S>,
}

impl<S: Scalar> LayerNormParams<S> {
    fn ones(dim: usize) -> Self {
        LayerNormParams {
            gamma: vec![S::one(); dim],
            beta: vec![S::zero(); dim],
        }
    }

    fn zeros(dim: usize) -> Self {
        LayerNormParams {
            gamma: vec![S::zero(); dim],
            beta: vec![S::zero(); dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<S> {
    pub ln1: LayerNormParams<S>,
    pub wq: Mat<S>,
    pub wk: Mat<S>,
    pub wv: Mat<S>,
    pub wo: Mat<S>,
    pub ln2: LayerNormParams<S>,
    pub w1: Mat<S>,
    pub w2: Mat<S>,
}

/// All trainable arrays of the backbone. Doubles as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct MlmWeights<S> {
    pub embedding: Mat<S>,
    pub position: Mat<S>,
    pub emb_ln: LayerNormParams<S>,
    pub layers: Vec<LayerWeights<S>>,
    pub final_ln: LayerNormParams<S>,
    pub out_proj: Option<Mat<S>>,
    pub out_bias: Vec<S>,
}

impl<S: Scalar> MlmWeights<S> {
    pub fn init(config: &MlmConfig, vocab_size: usize, rng: &mut ChaCha8Rng) -> Self {
        let d = config.dim;
        let std = 0.02;
        // Residual-output projections scaled down with depth, as usual.
        let resid_std = std / (2.0 * config.layers as f64).sqrt();
        let layers = (0..config.layers)
            .map(|_| LayerWeights {
                ln1: LayerNormParams::ones(d),
                wq: Mat::gaussian(d, d, std, rng),
                wk: Mat::gaussian(d, d, std, rng),
                wv: Mat::gaussian(d, d, std, rng),
                wo: Mat::gaussian(d, d, resid_std, rng),
                ln2: LayerNormParams::ones(d),
                w1: Mat::gaussian(config.ff_dim, d, std, rng),
                w2: Mat::gaussian(d, config.ff_dim, resid_std, rng),
            })
            .collect();
        MlmWeights {
            embedding: Mat::gaussian(vocab_size, d, std, rng),
            position: Mat::gaussian(config.max_seq, d, std, rng),
            emb_ln: LayerNormParams::ones(d),
            layers,
            final_ln: LayerNormParams::ones(d),
            out_proj: if config.tied_output {
                None
            } else {
                Some(Mat::gaussian(vocab_size, d, std, rng))
            },
            out_bias: vec![S::zero(); vocab_size],
        }
    }

    pub fn zeros(config: &MlmConfig, vocab_size: usize) -> Self {
        let d = config.dim;
        MlmWeights {
            embedding: Mat::zeros(vocab_size, d),
            position: Mat::zeros(config.max_seq, d),
            emb_ln: LayerNormParams::zeros(d),
            layers: (0..config.layers)
                .map(|_| LayerWeights {
                    ln1: LayerNormParams::zeros(d),
                    wq: Mat::zeros(d, d),
                    wk: Mat::zeros(d, d),
                    wv: Mat::zeros(d, d),
                    wo: Mat::zeros(d, d),
                    ln2: LayerNormParams::zeros(d),
                    w1: Mat::zeros(config.ff_dim, d),
                    w2: Mat::zeros(d, config.ff_dim),
                })
                .collect(),
            final_ln: LayerNormParams::zeros(d),
            out_proj: if config.tied_output {
                None
            } else {
                Some(Mat::zeros(vocab_size, d))
            },
            out_bias: vec![S::zero(); vocab_size],
        }
    }

    pub fn fill_zero(&mut self) {
        for (_, arr) in self.named_arrays_mut() {
            arr.iter_mut().for_each(|v| *v = S::zero());
        }
    }

    /// Stable (name, slice) view over every parameter array; the order is
    /// the checkpoint order and the optimizer-state order.
    pub fn named_arrays(&self) -> Vec<(String, &[S])> {
        let mut out: Vec<(String, &[S])> = vec![
            ("embedding".into(), self.embedding.data.as_slice()),
            ("position".into(), self.position.data.as_slice()),
            ("emb_ln.gamma".into(), self.emb_ln.gamma.as_slice()),
            ("emb_ln.beta".into(), self.emb_ln.beta.as_slice()),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.ln1.gamma"), l.ln1.gamma.as_slice()));
            out.push((format!("layer{i}.ln1.beta"), l.ln1.beta.as_slice()));
            out.push((format!("layer{i}.wq"), l.wq.data.as_slice()));
            out.push((format!("layer{i}.wk"), l.wk.data.as_slice()));
            out.push((format!("layer{i}.wv"), l.wv.data.as_slice()));
            out.push((format!("layer{i}.wo"), l.wo.data.as_slice()));
            out.push((format!("layer{i}.ln2.gamma"), l.ln2.gamma.as_slice()));
            out.push((format!("layer{i}.ln2.beta"), l.ln2.beta.as_slice()));
            out.push((format!("layer{i}.w1"), l.w1.data.as_slice()));
            out.push((format!("layer{i}.w2"), l.w2.data.as_slice()));
        }
        out.push(("final_ln.gamma".into(), self.final_ln.gamma.as_slice()));
        out.push(("final_ln.beta".into(), self.final_ln.beta.as_slice()));
        if let Some(p) = &self.out_proj {
            out.push(("out_proj".into(), p.data.as_slice()));
        }
        out.push(("out_bias".into(), self.out_bias.as_slice()));
        out
    }

    pub fn named_arrays_mut(&mut self) -> Vec<(String, &mut [S])> {
        let mut out: Vec<(String, &mut [S])> = vec![
            ("embedding".into(), self.embedding.data.as_mut_slice()),
            ("position".into(), self.position.data.as_mut_slice()),
            ("emb_ln.gamma".into(), self.emb_ln.gamma.as_mut_slice()),
            ("emb_ln.beta".into(), self.emb_ln.beta.as_mut_slice()),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{i}.ln1.gamma"), l.ln1.gamma.as_mut_slice()));
            out.push((format!("layer{i}.ln1.beta"), l.ln1.beta.as_mut_slice()));
            out.push((format!("layer{i}.wq"), l.wq.data.as_mut_slice()));
            out.push((format!("layer{i}.wk"), l.wk.data.as_mut_slice()));
            out.push((format!("layer{i}.wv"), l.wv.data.as_mut_slice()));
            out.push((format!("layer{i}.wo"), l.wo.data.as_mut_slice()));
            out.push((format!("layer{i}.ln2.gamma"), l.ln2.gamma.as_mut_slice()));
            out.push((format!("layer{i}.ln2.beta"), l.ln2.beta.as_mut_slice()));
            out.push((format!("layer{i}.w1"), l.w1.data.as_mut_slice()));
            out.push((format!("layer{i}.w2"), l.w2.data.as_mut_slice()));
        }
        out.push(("final_ln.gamma".into(), self.final_ln.gamma.as_mut_slice()));
        out.push(("final_ln.beta".into(), self.final_ln.beta.as_mut_slice()));
        if let Some(p) = &mut self.out_proj {
            out.push(("out_proj".into(), p.data.as_mut_slice()));
        }
        out.push(("out_bias".into(), self.out_bias.as_mut_slice()));
        out
    }
}

/// A weighted cross-entropy target at one mask position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskLoss<S> {
    /// Sequence position; must be a mask position of the input.
    pub position: usize,
    pub target: TokenId,
    pub weight: S,
}

/// Per-raw-vector-slot gradients. Token slots report `None`.
#[derive(Debug, Clone)]
pub struct InputGrads<S> {
    pub by_slot: Vec<Option<Vec<S>>>,
}

struct LnCache<S> {
    xhat: Mat<S>,
    rstd: Vec<S>,
}

struct LayerCache<S> {
    ln1: LnCache<S>,
    hn1: Mat<S>,
    q: Mat<S>,
    k: Mat<S>,
    v: Mat<S>,
    /// Attention weights per head, each seq x seq (query rows).
    aw: Vec<Mat<S>>,
    ctx: Mat<S>,
    ln2: LnCache<S>,
    hn2: Mat<S>,
    f1: Mat<S>,
    f1a: Mat<S>,
}

struct Cache<S> {
    emb_ln: LnCache<S>,
    layers: Vec<LayerCache<S>>,
    final_ln: LnCache<S>,
    hf: Mat<S>,
    /// Softmax probabilities at each mask position (for CE backward).
    probs: Vec<Vec<S>>,
}

/// One forward evaluation: per-mask log-probabilities plus the activation
/// cache needed for a backward pass.
pub struct ForwardPass<S> {
    pub mask_positions: Vec<usize>,
    /// Log-probability over the vocabulary, parallel to `mask_positions`.
    pub log_probs: Vec<Vec<S>>,
    cache: Cache<S>,
}

impl<S: Scalar> ForwardPass<S> {
    pub fn log_probs_at(&self, position: usize) -> Option<&[S]> {
        self.mask_positions
            .iter()
            .position(|&p| p == position)
            .map(|i| self.log_probs[i].as_slice())
    }

    /// Weighted cross-entropy implied by `losses`.
    pub fn loss(&self, losses: &[MaskLoss<S>]) -> Result<S> {
        let mut total = S::zero();
        for l in losses {
            let lp = self.log_probs_at(l.position).ok_or_else(|| {
                Error::config(format!("loss position {} is not a mask position", l.position))
            })?;
            total += -l.weight * lp[l.target];
        }
        Ok(total)
    }
}

fn ln_forward<S: Scalar>(p: &LayerNormParams<S>, x: &Mat<S>) -> (Mat<S>, LnCache<S>) {
    let d = x.cols;
    let mut y = Mat::zeros(x.rows, d);
    let mut xhat = Mat::zeros(x.rows, d);
    let mut rstd = vec![S::zero(); x.rows];
    let dn = S::from_usize(d);
    let eps = S::from_f64(LN_EPS);
    for t in 0..x.rows {
        let row = x.row(t);
        let mut mean = S::zero();
        for &v in row {
            mean += v;
        }
        mean /= dn;
        let mut var = S::zero();
        for &v in row {
            let c = v - mean;
            var += c * c;
        }
        var /= dn;
        let r = (var + eps).sqrt().recip();
        rstd[t] = r;
        let xh = xhat.row_mut(t);
        for i in 0..d {
            xh[i] = (row[i] - mean) * r;
        }
        let yr = y.row_mut(t);
        for i in 0..d {
            yr[i] = p.gamma[i] * xh[i] + p.beta[i];
        }
    }
    (y, LnCache { xhat, rstd })
}

/// dx += backward(dy); gamma/beta gradients accumulate when `grads` given.
fn ln_backward<S: Scalar>(
    p: &LayerNormParams<S>,
    cache: &LnCache<S>,
    dy: &Mat<S>,
    dx: &mut Mat<S>,
    mut grads: Option<&mut LayerNormParams<S>>,
) {
    let d = dy.cols;
    let dn = S::from_usize(d);
    for t in 0..dy.rows {
        let dyr = dy.row(t);
        let xh = cache.xhat.row(t);
        if let Some(g) = grads.as_deref_mut() {
            for i in 0..d {
                g.gamma[i] += dyr[i] * xh[i];
                g.beta[i] += dyr[i];
            }
        }
        let mut sum_dxhat = S::zero();
        let mut sum_dxhat_xhat = S::zero();
        for i in 0..d {
            let dxh = dyr[i] * p.gamma[i];
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xh[i];
        }
        let m1 = sum_dxhat / dn;
        let m2 = sum_dxhat_xhat / dn;
        let r = cache.rstd[t];
        let dxr = dx.row_mut(t);
        for i in 0..d {
            let dxh = dyr[i] * p.gamma[i];
            dxr[i] += r * (dxh - m1 - xh[i] * m2);
        }
    }
}

fn gelu<S: Scalar>(x: S) -> S {
    let c = S::from_f64(0.7978845608028654); // sqrt(2/pi)
    let a = S::from_f64(0.044715);
    let u = c * (x + a * x * x * x);
    let half = S::from_f64(0.5);
    half * x * (S::one() + u.tanh())
}

fn gelu_grad<S: Scalar>(x: S) -> S {
    let c = S::from_f64(0.7978845608028654);
    let a = S::from_f64(0.044715);
    let three_a = S::from_f64(3.0 * 0.044715);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let half = S::from_f64(0.5);
    half * (S::one() + t) + half * x * (S::one() - t * t) * c * (S::one() + three_a * x * x)
}

/// The masked-LM backbone: vocabulary, architecture, weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlm<S> {
    pub vocab: Vocab,
    pub config: MlmConfig,
    pub weights: MlmWeights<S>,
}

impl<S: Scalar> Mlm<S> {
    pub fn new(vocab: Vocab, config: MlmConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = MlmWeights::init(&config, vocab.len(), &mut rng);
        Ok(Mlm {
            vocab,
            config,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    /// Embedding rows for the given ids. Read-only with respect to weights.
    pub fn embed(&self, ids: &[TokenId]) -> Result<Vec<Vec<S>>> {
        ids.iter()
            .map(|&id| {
                if id >= self.vocab.len() {
                    Err(Error::config(format!("token id {id} out of range")))
                } else {
                    Ok(self.weights.embedding.row(id).to_vec())
                }
            })
            .collect()
    }

    fn output_matrix(&self) -> &Mat<S> {
        self.weights.out_proj.as_ref().unwrap_or(&self.weights.embedding)
    }

    /// Forward pass; yields log-probability distributions at every mask
    /// position. Pure in (weights, input).
    pub fn forward(&self, input: &SlotSequence<S>) -> Result<ForwardPass<S>> {
        let d = self.config.dim;
        let seq = input.len();
        if seq == 0 {
            return Err(Error::config("empty input sequence"));
        }
        if seq > self.config.max_seq {
            return Err(Error::config(format!(
                "sequence length {seq} exceeds max_seq {}",
                self.config.max_seq
            )));
        }
        if input.mask_positions().is_empty() {
            return Err(Error::config("input has no mask positions"));
        }

        // Embedding sum.
        let mut x0 = Mat::zeros(seq, d);
        for (t, slot) in input.slots().iter().enumerate() {
            let row = x0.row_mut(t);
            match slot {
                Slot::Token(id) => {
                    let e = self.weights.embedding.row(*id);
                    row.copy_from_slice(e);
                }
                Slot::Vector(v) => {
                    if v.len() != d {
                        return Err(Error::numeric(format!(
                            "slot {t}: vector dim {} != model dim {d}",
                            v.len()
                        )));
                    }
                    row.copy_from_slice(v);
                }
            }
            let pos = self.weights.position.row(t);
            for i in 0..d {
                row[i] += pos[i];
            }
        }
        let (mut h, emb_ln) = ln_forward(&self.weights.emb_ln, &x0);

        let heads = self.config.heads;
        let hd = self.config.head_dim();
        let scale = S::from_f64((hd as f64).sqrt()).recip();
        let mut layer_caches = Vec::with_capacity(self.config.layers);

        for lw in &self.weights.layers {
            let (hn1, ln1) = ln_forward(&lw.ln1, &h);
            let mut q = Mat::zeros(seq, d);
            let mut k = Mat::zeros(seq, d);
            let mut v = Mat::zeros(seq, d);
            for t in 0..seq {
                matvec_acc(&lw.wq, hn1.row(t), q.row_mut(t));
                matvec_acc(&lw.wk, hn1.row(t), k.row_mut(t));
                matvec_acc(&lw.wv, hn1.row(t), v.row_mut(t));
            }
            let mut aw: Vec<Mat<S>> = Vec::with_capacity(heads);
            let mut ctx = Mat::zeros(seq, d);
            for head in 0..heads {
                let lo = head * hd;
                let hi = lo + hd;
                let mut w = Mat::zeros(seq, seq);
                for i in 0..seq {
                    let qi = &q.row(i)[lo..hi];
                    let row = w.row_mut(i);
                    for j in 0..seq {
                        let kj = &k.row(j)[lo..hi];
                        row[j] = crate::linalg::dot(qi, kj) * scale;
                    }
                    crate::linalg::softmax_inplace(row);
                    for j in 0..seq {
                        let a = row[j];
                        let vj = &v.row(j)[lo..hi];
                        let ci = &mut ctx.row_mut(i)[lo..hi];
                        for c in 0..hd {
                            ci[c] += a * vj[c];
                        }
                    }
                }
                aw.push(w);
            }
            let mut h2 = h.clone();
            for t in 0..seq {
                matvec_acc(&lw.wo, ctx.row(t), h2.row_mut(t));
            }

            let (hn2, ln2) = ln_forward(&lw.ln2, &h2);
            let mut f1 = Mat::zeros(seq, self.config.ff_dim);
            let mut f1a = Mat::zeros(seq, self.config.ff_dim);
            let mut h3 = h2.clone();
            for t in 0..seq {
                matvec_acc(&lw.w1, hn2.row(t), f1.row_mut(t));
                let fr = f1.row(t);
                let fa = f1a.row_mut(t);
                for i in 0..fr.len() {
                    fa[i] = gelu(fr[i]);
                }
                matvec_acc(&lw.w2, f1a.row(t), h3.row_mut(t));
            }

            layer_caches.push(LayerCache {
                ln1,
                hn1,
                q,
                k,
                v,
                aw,
                ctx,
                ln2,
                hn2,
                f1,
                f1a,
            });
            h = h3;
        }

        let (hf, final_ln) = ln_forward(&self.weights.final_ln, &h);

        let out = self.output_matrix();
        let mask_positions = input.mask_positions().to_vec();
        let mut log_probs = Vec::with_capacity(mask_positions.len());
        let mut probs = Vec::with_capacity(mask_positions.len());
        for &p in &mask_positions {
            let mut logits = self.weights.out_bias.clone();
            matvec_acc(out, hf.row(p), &mut logits);
            let lp = log_softmax(&logits);
            probs.push(lp.iter().map(|&x| x.exp()).collect());
            log_probs.push(lp);
        }

        Ok(ForwardPass {
            mask_positions,
            log_probs,
            cache: Cache {
                emb_ln,
                layers: layer_caches,
                final_ln,
                hf,
                probs,
            },
        })
    }

    /// Reverse pass for a weighted cross-entropy over mask positions.
    /// Returns gradients for raw-vector slots; accumulates backbone
    /// parameter gradients into `param_grads` when provided.
    pub fn backward(
        &self,
        input: &SlotSequence<S>,
        fwd: &ForwardPass<S>,
        losses: &[MaskLoss<S>],
        mut param_grads: Option<&mut MlmWeights<S>>,
    ) -> Result<InputGrads<S>> {
        let d = self.config.dim;
        let seq = input.len();
        let vs = self.vocab.len();

        // d_logits per mask position actually referenced by a loss.
        let mut d_logits: Vec<Option<Vec<S>>> = vec![None; fwd.mask_positions.len()];
        for l in losses {
            let mi = fwd
                .mask_positions
                .iter()
                .position(|&p| p == l.position)
                .ok_or_else(|| {
                    Error::config(format!("loss position {} is not a mask position", l.position))
                })?;
            if l.target >= vs {
                return Err(Error::config(format!("loss target {} out of range", l.target)));
            }
            let dl = d_logits[mi].get_or_insert_with(|| vec![S::zero(); vs]);
            let probs = &fwd.cache.probs[mi];
            for v in 0..vs {
                dl[v] += l.weight * probs[v];
            }
            dl[l.target] -= l.weight;
        }

        // Output projection backward.
        let out = self.output_matrix();
        let mut d_hf = Mat::zeros(seq, d);
        for (mi, dl) in d_logits.iter().enumerate() {
            let Some(dl) = dl else { continue };
            let p = fwd.mask_positions[mi];
            matvec_bwd_input(out, dl, d_hf.row_mut(p));
            if let Some(g) = param_grads.as_deref_mut() {
                for v in 0..vs {
                    g.out_bias[v] += dl[v];
                }
                let gm = g.out_proj.as_mut().unwrap_or(&mut g.embedding);
                matvec_bwd_weight(gm, dl, fwd.cache.hf.row(p));
            }
        }

        // Final LayerNorm.
        let mut d_h = Mat::zeros(seq, d);
        ln_backward(
            &self.weights.final_ln,
            &fwd.cache.final_ln,
            &d_hf,
            &mut d_h,
            param_grads.as_deref_mut().map(|g| &mut g.final_ln),
        );

        let heads = self.config.heads;
        let hd = self.config.head_dim();
        let scale = S::from_f64((hd as f64).sqrt()).recip();

        for (li, lw) in self.weights.layers.iter().enumerate().rev() {
            let lc = &fwd.cache.layers[li];

            // Feed-forward block: h3 = h2 + W2 gelu(W1 hn2).
            let mut d_hn2 = Mat::zeros(seq, d);
            {
                let mut d_f1 = vec![S::zero(); self.config.ff_dim];
                for t in 0..seq {
                    let dy = d_h.row(t).to_vec();
                    let mut d_f1a = vec![S::zero(); self.config.ff_dim];
                    matvec_bwd_input(&lw.w2, &dy, &mut d_f1a);
                    if let Some(g) = param_grads.as_deref_mut() {
                        matvec_bwd_weight(&mut g.layers[li].w2, &dy, lc.f1a.row(t));
                    }
                    let f1r = lc.f1.row(t);
                    for i in 0..self.config.ff_dim {
                        d_f1[i] = d_f1a[i] * gelu_grad(f1r[i]);
                    }
                    matvec_bwd_input(&lw.w1, &d_f1, d_hn2.row_mut(t));
                    if let Some(g) = param_grads.as_deref_mut() {
                        matvec_bwd_weight(&mut g.layers[li].w1, &d_f1, lc.hn2.row(t));
                    }
                }
            }
            // Residual: d_h2 = d_h3 + ln2-backward(d_hn2).
            ln_backward(
                &lw.ln2,
                &lc.ln2,
                &d_hn2,
                &mut d_h,
                param_grads.as_deref_mut().map(|g| &mut g.layers[li].ln2),
            );

            // Attention block: h2 = h + Wo ctx.
            let mut d_ctx = Mat::zeros(seq, d);
            for t in 0..seq {
                let dy = d_h.row(t).to_vec();
                matvec_bwd_input(&lw.wo, &dy, d_ctx.row_mut(t));
                if let Some(g) = param_grads.as_deref_mut() {
                    matvec_bwd_weight(&mut g.layers[li].wo, &dy, lc.ctx.row(t));
                }
            }

            let mut d_q = Mat::zeros(seq, d);
            let mut d_k = Mat::zeros(seq, d);
            let mut d_v = Mat::zeros(seq, d);
            for head in 0..heads {
                let lo = head * hd;
                let hi = lo + hd;
                let aw = &lc.aw[head];
                for i in 0..seq {
                    let dci = &d_ctx.row(i)[lo..hi];
                    let awr = aw.row(i);
                    // d_v and raw attention-weight grads.
                    let mut d_aw = vec![S::zero(); seq];
                    for j in 0..seq {
                        let vj = &lc.v.row(j)[lo..hi];
                        d_aw[j] = crate::linalg::dot(dci, vj);
                        let a = awr[j];
                        let dvj = &mut d_v.row_mut(j)[lo..hi];
                        for c in 0..hd {
                            dvj[c] += a * dci[c];
                        }
                    }
                    // Softmax backward.
                    let mut dot = S::zero();
                    for j in 0..seq {
                        dot += awr[j] * d_aw[j];
                    }
                    for j in 0..seq {
                        let ds = awr[j] * (d_aw[j] - dot) * scale;
                        let kj = &lc.k.row(j)[lo..hi];
                        let dqi = &mut d_q.row_mut(i)[lo..hi];
                        for c in 0..hd {
                            dqi[c] += ds * kj[c];
                        }
                        let qi = &lc.q.row(i)[lo..hi];
                        let dkj = &mut d_k.row_mut(j)[lo..hi];
                        for c in 0..hd {
                            dkj[c] += ds * qi[c];
                        }
                    }
                }
            }

            let mut d_hn1 = Mat::zeros(seq, d);
            for t in 0..seq {
                matvec_bwd_input(&lw.wq, d_q.row(t), d_hn1.row_mut(t));
                matvec_bwd_input(&lw.wk, d_k.row(t), d_hn1.row_mut(t));
                matvec_bwd_input(&lw.wv, d_v.row(t), d_hn1.row_mut(t));
                if let Some(g) = param_grads.as_deref_mut() {
                    matvec_bwd_weight(&mut g.layers[li].wq, d_q.row(t), lc.hn1.row(t));
                    matvec_bwd_weight(&mut g.layers[li].wk, d_k.row(t), lc.hn1.row(t));
                    matvec_bwd_weight(&mut g.layers[li].wv, d_v.row(t), lc.hn1.row(t));
                }
            }
            ln_backward(
                &lw.ln1,
                &lc.ln1,
                &d_hn1,
                &mut d_h,
                param_grads.as_deref_mut().map(|g| &mut g.layers[li].ln1),
            );
        }

        // Embedding LayerNorm back to the raw input sum.
        let mut d_x0 = Mat::zeros(seq, d);
        ln_backward(
            &self.weights.emb_ln,
            &fwd.cache.emb_ln,
            &d_h,
            &mut d_x0,
            param_grads.as_deref_mut().map(|g| &mut g.emb_ln),
        );

        let mut by_slot: Vec<Option<Vec<S>>> = Vec::with_capacity(seq);
        for (t, slot) in input.slots().iter().enumerate() {
            match slot {
                Slot::Vector(_) => by_slot.push(Some(d_x0.row(t).to_vec())),
                Slot::Token(id) => {
                    if let Some(g) = param_grads.as_deref_mut() {
                        let row = g.embedding.row_mut(*id);
                        let dx = d_x0.row(t);
                        for i in 0..d {
                            row[i] += dx[i];
                        }
                    }
                    by_slot.push(None);
                }
            }
            if let Some(g) = param_grads.as_deref_mut() {
                let row = g.position.row_mut(t);
                let dx = d_x0.row(t);
                for i in 0..d {
                    row[i] += dx[i];
                }
            }
        }
        Ok(InputGrads { by_slot })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_vocab(n: usize) -> Vocab {
        Vocab::build((0..n).map(|i| format!("w{i}")))
    }

    fn tiny_model() -> Mlm<f64> {
        let config = MlmConfig {
            layers: 2,
            heads: 2,
            dim: 16,
            ff_dim: 32,
            max_seq: 16,
            tied_output: true,
        };
        Mlm::new(tiny_vocab(12), config, 99).unwrap()
    }

    fn seq_with_mask(m: &Mlm<f64>, ids: &[usize], mask_at: usize) -> SlotSequence<f64> {
        let mut slots: Vec<Slot<f64>> = ids.iter().map(|&i| Slot::Token(i)).collect();
        slots[mask_at] = Slot::Token(m.vocab.mask_id());
        SlotSequence::new(slots, &m.vocab).unwrap()
    }

    #[test]
    fn distributions_normalize() {
        let m = tiny_model();
        let input = seq_with_mask(&m, &[3, 4, 5, 6], 2);
        let fwd = m.forward(&input).unwrap();
        for lp in &fwd.log_probs {
            let total: f64 = lp.iter().map(|v| v.exp()).sum();
            assert!((total - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn embed_returns_table_rows() {
        let m = tiny_model();
        let pad = m.vocab.pad_id();
        let rows = m.embed(&[pad, 5]).unwrap();
        assert_eq!(rows[0], m.weights.embedding.row(pad).to_vec());
        assert_eq!(rows[1], m.weights.embedding.row(5).to_vec());
        assert_eq!(rows[0].len(), m.dim());
        assert!(m.embed(&[999]).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let m = tiny_model();
        let input = seq_with_mask(&m, &[3, 4, 5], 1);
        let a = m.forward(&input).unwrap();
        let b = m.forward(&input).unwrap();
        assert_eq!(a.log_probs, b.log_probs);
    }

    #[test]
    fn permuting_non_mask_slots_changes_output() {
        let m = tiny_model();
        let a = m.forward(&seq_with_mask(&m, &[3, 4, 5, 6], 1)).unwrap();
        let b = m.forward(&seq_with_mask(&m, &[3, 6, 5, 4], 1)).unwrap();
        // Positions 3 and 6 swapped around the mask; learned positional
        // embeddings must make the distributions differ.
        assert_ne!(a.log_probs, b.log_probs);
    }

    #[test]
    fn no_mask_is_an_error() {
        let m = tiny_model();
        let input = SlotSequence::from_token_ids(&[3, 4], &m.vocab).unwrap();
        assert!(m.forward(&input).is_err());
    }

    #[test]
    fn wrong_vector_dim_is_an_error() {
        let m = tiny_model();
        let slots = vec![
            Slot::Vector(vec![0.0f64; 8]),
            Slot::Token(m.vocab.mask_id()),
        ];
        let input = SlotSequence::new(slots, &m.vocab).unwrap();
        assert!(m.forward(&input).is_err());
    }

    #[test]
    fn loss_on_non_mask_position_errors() {
        let m = tiny_model();
        let input = seq_with_mask(&m, &[3, 4, 5], 1);
        let fwd = m.forward(&input).unwrap();
        let bad = [MaskLoss {
            position: 0,
            target: 3,
            weight: 1.0,
        }];
        assert!(m.backward(&input, &fwd, &bad, None).is_err());
    }

    #[test]
    fn token_slots_report_no_gradient() {
        let m = tiny_model();
        let slots = vec![
            Slot::Vector(vec![0.01f64; 16]),
            Slot::Token(5),
            Slot::Token(m.vocab.mask_id()),
        ];
        let input = SlotSequence::new(slots, &m.vocab).unwrap();
        let fwd = m.forward(&input).unwrap();
        let g = m
            .backward(
                &input,
                &fwd,
                &[MaskLoss {
                    position: 2,
                    target: 4,
                    weight: 1.0,
                }],
                None,
            )
            .unwrap();
        assert!(g.by_slot[0].is_some());
        assert!(g.by_slot[1].is_none());
        assert!(g.by_slot[2].is_none());
    }

    #[test]
    fn zero_vector_slots_have_finite_gradients() {
        let m = tiny_model();
        let slots = vec![
            Slot::Vector(vec![0.0f64; 16]),
            Slot::Token(m.vocab.mask_id()),
        ];
        let input = SlotSequence::new(slots, &m.vocab).unwrap();
        let fwd = m.forward(&input).unwrap();
        let g = m
            .backward(
                &input,
                &fwd,
                &[MaskLoss {
                    position: 1,
                    target: 3,
                    weight: 1.0,
                }],
                None,
            )
            .unwrap();
        let gv = g.by_slot[0].as_ref().unwrap();
        assert!(gv.iter().all(|v| v.is_finite()));
    }

    /// Central finite differences on every raw-vector slot coordinate.
    #[test]
    fn input_gradients_match_finite_differences() {
        let m = tiny_model();
        let base: Vec<f64> = (0..16).map(|i| 0.05 * (i as f64 - 8.0)).collect();
        let slots = vec![
            Slot::Vector(base.clone()),
            Slot::Token(4),
            Slot::Token(m.vocab.mask_id()),
            Slot::Vector(base.iter().map(|v| -v * 0.5).collect()),
        ];
        let input = SlotSequence::new(slots.clone(), &m.vocab).unwrap();
        let losses = [MaskLoss {
            position: 2,
            target: 6,
            weight: 1.0,
        }];
        let fwd = m.forward(&input).unwrap();
        let analytic = m.backward(&input, &fwd, &losses, None).unwrap();

        let h = 1e-4;
        for slot_idx in [0usize, 3] {
            for coord in 0..16 {
                let mut wiggle = |delta: f64| -> f64 {
                    let mut s = slots.clone();
                    if let Slot::Vector(v) = &mut s[slot_idx] {
                        v[coord] += delta;
                    }
                    let inp = SlotSequence::new(s, &m.vocab).unwrap();
                    m.forward(&inp).unwrap().loss(&losses).unwrap()
                };
                let num = (wiggle(h) - wiggle(-h)) / (2.0 * h);
                let ana = analytic.by_slot[slot_idx].as_ref().unwrap()[coord];
                let denom = num.abs().max(ana.abs()).max(1e-8);
                assert!(
                    (num - ana).abs() / denom < 1e-3,
                    "slot {slot_idx} coord {coord}: fd {num} vs analytic {ana}"
                );
            }
        }
    }
}
