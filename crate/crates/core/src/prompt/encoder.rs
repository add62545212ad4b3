//! Continuous prompt generation: per-relation seed matrices pushed through
//! a shared two-layer bidirectional LSTM and a two-layer ReLU perceptron.
//!
//! One encoder network serves every relation and both prompt kinds;
//! relations are distinguished only by their seed matrices.

use crate::error::{Error, Result};
use crate::linalg::{matvec_bwd_input, matvec_bwd_weight, Mat};
use crate::prompt::template::Template;
use crate::scalar::Scalar;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One LSTM direction: gate weights stacked [input; forget; cell; output].
#[derive(Debug, Clone, PartialEq)]
pub struct LstmDir<S> {
    pub wx: Mat<S>, // 4H x in
    pub wh: Mat<S>, // 4H x H
    pub b: Vec<S>,  // 4H
}

impl<S: Scalar> LstmDir<S> {
    fn init(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut b = vec![S::zero(); 4 * hidden];
        // Forget-gate bias starts at one.
        for v in b[hidden..2 * hidden].iter_mut() {
            *v = S::one();
        }
        LstmDir {
            wx: Mat::uniform(4 * hidden, input, bound, rng),
            wh: Mat::uniform(4 * hidden, hidden, bound, rng),
            b,
        }
    }

    fn zeros(input: usize, hidden: usize) -> Self {
        LstmDir {
            wx: Mat::zeros(4 * hidden, input),
            wh: Mat::zeros(4 * hidden, hidden),
            b: vec![S::zero(); 4 * hidden],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmLayer<S> {
    pub fwd: LstmDir<S>,
    pub bwd: LstmDir<S>,
}

/// Parameters of the prompt generation model.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptEncoder<S> {
    pub template: Template,
    pub dim: usize,
    pub relation_ids: Vec<String>,
    /// One (n+m+k) x dim seed matrix per relation.
    pub seeds: Vec<Mat<S>>,
    /// Two bidirectional layers; hidden size = dim per direction.
    pub layers: Vec<BiLstmLayer<S>>,
    pub mlp_w1: Mat<S>, // dim x 2*dim
    pub mlp_b1: Vec<S>,
    pub mlp_w2: Mat<S>, // dim x dim
    pub mlp_b2: Vec<S>,
}

impl<S: Scalar> PromptEncoder<S> {
    pub fn new(template: Template, dim: usize, relation_ids: Vec<String>, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("prompt encoder dim must be positive"));
        }
        {
            let mut sorted = relation_ids.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != relation_ids.len() {
                return Err(Error::config("duplicate relation ids"));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let slots = template.vector_count();
        let seeds = relation_ids
            .iter()
            .map(|_| Mat::gaussian(slots, dim, 0.02, &mut rng))
            .collect();
        let layers = vec![
            BiLstmLayer {
                fwd: LstmDir::init(dim, dim, &mut rng),
                bwd: LstmDir::init(dim, dim, &mut rng),
            },
            BiLstmLayer {
                fwd: LstmDir::init(2 * dim, dim, &mut rng),
                bwd: LstmDir::init(2 * dim, dim, &mut rng),
            },
        ];
        let bound1 = 1.0 / (2.0 * dim as f64).sqrt();
        let bound2 = 1.0 / (dim as f64).sqrt();
        Ok(PromptEncoder {
            template,
            dim,
            relation_ids,
            seeds,
            layers,
            mlp_w1: Mat::uniform(dim, 2 * dim, bound1, &mut rng),
            mlp_b1: vec![S::zero(); dim],
            mlp_w2: Mat::uniform(dim, dim, bound2, &mut rng),
            mlp_b2: vec![S::zero(); dim],
        })
    }

    /// A same-shape, all-zero copy for gradient accumulation.
    pub fn zeros_like(&self) -> Self {
        PromptEncoder {
            template: self.template,
            dim: self.dim,
            relation_ids: self.relation_ids.clone(),
            seeds: self
                .seeds
                .iter()
                .map(|s| Mat::zeros(s.rows, s.cols))
                .collect(),
            layers: self
                .layers
                .iter()
                .enumerate()
                .map(|(i, _)| {
                    let input = if i == 0 { self.dim } else { 2 * self.dim };
                    BiLstmLayer {
                        fwd: LstmDir::zeros(input, self.dim),
                        bwd: LstmDir::zeros(input, self.dim),
                    }
                })
                .collect(),
            mlp_w1: Mat::zeros(self.dim, 2 * self.dim),
            mlp_b1: vec![S::zero(); self.dim],
            mlp_w2: Mat::zeros(self.dim, self.dim),
            mlp_b2: vec![S::zero(); self.dim],
        }
    }

    pub fn fill_zero(&mut self) {
        for (_, arr) in self.named_arrays_mut() {
            arr.iter_mut().for_each(|v| *v = S::zero());
        }
    }

    pub fn relation_index(&self, rel_id: &str) -> Result<usize> {
        self.relation_ids
            .iter()
            .position(|r| r == rel_id)
            .ok_or_else(|| Error::config(format!("unknown relation {rel_id:?}")))
    }

    pub fn named_arrays(&self) -> Vec<(String, &[S])> {
        let mut out: Vec<(String, &[S])> = Vec::new();
        for (r, s) in self.relation_ids.iter().zip(&self.seeds) {
            out.push((format!("seed.{r}"), s.data.as_slice()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            for (dname, d) in [("fwd", &l.fwd), ("bwd", &l.bwd)] {
                out.push((format!("lstm{i}.{dname}.wx"), d.wx.data.as_slice()));
                out.push((format!("lstm{i}.{dname}.wh"), d.wh.data.as_slice()));
                out.push((format!("lstm{i}.{dname}.b"), d.b.as_slice()));
            }
        }
        out.push(("mlp.w1".into(), self.mlp_w1.data.as_slice()));
        out.push(("mlp.b1".into(), self.mlp_b1.as_slice()));
        out.push(("mlp.w2".into(), self.mlp_w2.data.as_slice()));
        out.push(("mlp.b2".into(), self.mlp_b2.as_slice()));
        out
    }

    pub fn named_arrays_mut(&mut self) -> Vec<(String, &mut [S])> {
        let mut out: Vec<(String, &mut [S])> = Vec::new();
        for (r, s) in self.relation_ids.iter().zip(self.seeds.iter_mut()) {
            out.push((format!("seed.{r}"), s.data.as_mut_slice()));
        }
        for (i, l) in self.layers.iter_mut().enumerate() {
            for (dname, d) in [("fwd", &mut l.fwd), ("bwd", &mut l.bwd)] {
                out.push((format!("lstm{i}.{dname}.wx"), d.wx.data.as_mut_slice()));
                out.push((format!("lstm{i}.{dname}.wh"), d.wh.data.as_mut_slice()));
                out.push((format!("lstm{i}.{dname}.b"), d.b.as_mut_slice()));
            }
        }
        out.push(("mlp.w1".into(), self.mlp_w1.data.as_mut_slice()));
        out.push(("mlp.b1".into(), self.mlp_b1.as_mut_slice()));
        out.push(("mlp.w2".into(), self.mlp_w2.data.as_mut_slice()));
        out.push(("mlp.b2".into(), self.mlp_b2.as_mut_slice()));
        out
    }

    /// Encodes one relation into (n+m+k) template vectors.
    pub fn encode(&self, relation: usize) -> Result<(Vec<Vec<S>>, EncodeCache<S>)> {
        if relation >= self.seeds.len() {
            return Err(Error::config(format!("relation index {relation} out of range")));
        }
        let seq: Vec<Vec<S>> = (0..self.template.vector_count())
            .map(|t| self.seeds[relation].row(t).to_vec())
            .collect();

        let mut layer_caches = Vec::with_capacity(self.layers.len());
        let mut x = seq.clone();
        for layer in &self.layers {
            let fwd = lstm_dir_forward(&layer.fwd, &x, false, self.dim);
            let bwd = lstm_dir_forward(&layer.bwd, &x, true, self.dim);
            let concat: Vec<Vec<S>> = (0..x.len())
                .map(|t| {
                    let mut v = fwd.h_by_pos(t).to_vec();
                    v.extend_from_slice(bwd.h_by_pos(t));
                    v
                })
                .collect();
            layer_caches.push(BiLayerCache {
                input: x,
                fwd,
                bwd,
            });
            x = concat;
        }

        let mut u1s = Vec::with_capacity(x.len());
        let mut a1s = Vec::with_capacity(x.len());
        let mut out = Vec::with_capacity(x.len());
        for h in &x {
            let mut u1 = self.mlp_b1.clone();
            crate::linalg::matvec_acc(&self.mlp_w1, h, &mut u1);
            let a1: Vec<S> = u1.iter().map(|&v| if v > S::zero() { v } else { S::zero() }).collect();
            let mut o = self.mlp_b2.clone();
            crate::linalg::matvec_acc(&self.mlp_w2, &a1, &mut o);
            u1s.push(u1);
            a1s.push(a1);
            out.push(o);
        }

        Ok((
            out,
            EncodeCache {
                relation,
                layers: layer_caches,
                lstm_out: x,
                u1s,
                a1s,
            },
        ))
    }

    /// Backpropagates vector gradients into `grads` (same shape as self).
    pub fn backward(&self, cache: &EncodeCache<S>, d_vectors: &[Vec<S>], grads: &mut Self) {
        let slots = self.template.vector_count();
        assert_eq!(d_vectors.len(), slots, "one gradient per template vector");

        // MLP backward.
        let mut d_lstm_out: Vec<Vec<S>> = vec![vec![S::zero(); 2 * self.dim]; slots];
        for t in 0..slots {
            let d_out = &d_vectors[t];
            let mut d_a1 = vec![S::zero(); self.dim];
            matvec_bwd_input(&self.mlp_w2, d_out, &mut d_a1);
            matvec_bwd_weight(&mut grads.mlp_w2, d_out, &cache.a1s[t]);
            for i in 0..self.dim {
                grads.mlp_b2[i] += d_out[i];
            }
            let u1 = &cache.u1s[t];
            let d_u1: Vec<S> = d_a1
                .iter()
                .zip(u1)
                .map(|(&da, &u)| if u > S::zero() { da } else { S::zero() })
                .collect();
            matvec_bwd_input(&self.mlp_w1, &d_u1, &mut d_lstm_out[t]);
            matvec_bwd_weight(&mut grads.mlp_w1, &d_u1, &cache.lstm_out[t]);
            for i in 0..self.dim {
                grads.mlp_b1[i] += d_u1[i];
            }
        }

        // BiLSTM layers, deepest first.
        let mut d_concat = d_lstm_out;
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let lc = &cache.layers[li];
            let d_h_fwd: Vec<&[S]> = d_concat.iter().map(|v| &v[..self.dim]).collect();
            let d_h_bwd: Vec<&[S]> = d_concat.iter().map(|v| &v[self.dim..]).collect();
            let mut d_input = vec![vec![S::zero(); lc.input[0].len()]; slots];
            lstm_dir_backward(
                &layer.fwd,
                &lc.fwd,
                &lc.input,
                &d_h_fwd,
                &mut grads.layers[li].fwd,
                &mut d_input,
            );
            lstm_dir_backward(
                &layer.bwd,
                &lc.bwd,
                &lc.input,
                &d_h_bwd,
                &mut grads.layers[li].bwd,
                &mut d_input,
            );
            d_concat = d_input;
        }

        // Into the relation's seed matrix.
        for t in 0..slots {
            let row = grads.seeds[cache.relation].row_mut(t);
            for i in 0..self.dim {
                row[i] += d_concat[t][i];
            }
        }
    }
}

/// Activations of one LSTM direction, stored in processing order.
pub struct DirCache<S> {
    reverse: bool,
    seq_len: usize,
    i: Vec<Vec<S>>,
    f: Vec<Vec<S>>,
    g: Vec<Vec<S>>,
    o: Vec<Vec<S>>,
    c: Vec<Vec<S>>,
    tc: Vec<Vec<S>>,
    h: Vec<Vec<S>>,
}

impl<S: Scalar> DirCache<S> {
    fn pos(&self, step: usize) -> usize {
        if self.reverse {
            self.seq_len - 1 - step
        } else {
            step
        }
    }

    fn h_by_pos(&self, pos: usize) -> &[S] {
        let step = if self.reverse { self.seq_len - 1 - pos } else { pos };
        &self.h[step]
    }
}

fn sigmoid<S: Scalar>(x: S) -> S {
    (S::one() + (-x).exp()).recip()
}

fn lstm_dir_forward<S: Scalar>(p: &LstmDir<S>, xs: &[Vec<S>], reverse: bool, hidden: usize) -> DirCache<S> {
    let t_len = xs.len();
    let mut cache = DirCache {
        reverse,
        seq_len: t_len,
        i: Vec::with_capacity(t_len),
        f: Vec::with_capacity(t_len),
        g: Vec::with_capacity(t_len),
        o: Vec::with_capacity(t_len),
        c: Vec::with_capacity(t_len),
        tc: Vec::with_capacity(t_len),
        h: Vec::with_capacity(t_len),
    };
    let mut h_prev = vec![S::zero(); hidden];
    let mut c_prev = vec![S::zero(); hidden];
    for step in 0..t_len {
        let x = &xs[cache.pos(step)];
        let mut z = p.b.clone();
        crate::linalg::matvec_acc(&p.wx, x, &mut z);
        crate::linalg::matvec_acc(&p.wh, &h_prev, &mut z);
        let mut gi = vec![S::zero(); hidden];
        let mut gf = vec![S::zero(); hidden];
        let mut gg = vec![S::zero(); hidden];
        let mut go = vec![S::zero(); hidden];
        let mut c = vec![S::zero(); hidden];
        let mut tc = vec![S::zero(); hidden];
        let mut h = vec![S::zero(); hidden];
        for j in 0..hidden {
            gi[j] = sigmoid(z[j]);
            gf[j] = sigmoid(z[hidden + j]);
            gg[j] = z[2 * hidden + j].tanh();
            go[j] = sigmoid(z[3 * hidden + j]);
            c[j] = gf[j] * c_prev[j] + gi[j] * gg[j];
            tc[j] = c[j].tanh();
            h[j] = go[j] * tc[j];
        }
        h_prev = h.clone();
        c_prev = c.clone();
        cache.i.push(gi);
        cache.f.push(gf);
        cache.g.push(gg);
        cache.o.push(go);
        cache.c.push(c);
        cache.tc.push(tc);
        cache.h.push(h);
    }
    cache
}

/// BPTT for one direction. `d_h_seq` is indexed by sequence position;
/// input gradients accumulate into `d_input` (also by position).
fn lstm_dir_backward<S: Scalar>(
    p: &LstmDir<S>,
    cache: &DirCache<S>,
    xs: &[Vec<S>],
    d_h_seq: &[&[S]],
    grads: &mut LstmDir<S>,
    d_input: &mut [Vec<S>],
) {
    let hidden = cache.h.first().map_or(0, |h| h.len());
    let t_len = xs.len();
    let mut carry_dh = vec![S::zero(); hidden];
    let mut carry_dc = vec![S::zero(); hidden];
    for step in (0..t_len).rev() {
        let pos = cache.pos(step);
        let gi = &cache.i[step];
        let gf = &cache.f[step];
        let gg = &cache.g[step];
        let go = &cache.o[step];
        let tc = &cache.tc[step];
        let c_prev: Option<&Vec<S>> = if step > 0 { Some(&cache.c[step - 1]) } else { None };
        let h_prev: Option<&Vec<S>> = if step > 0 { Some(&cache.h[step - 1]) } else { None };

        let mut dz = vec![S::zero(); 4 * hidden];
        let mut next_dc = vec![S::zero(); hidden];
        for j in 0..hidden {
            let dh = d_h_seq[pos][j] + carry_dh[j];
            let mut dc = carry_dc[j] + dh * go[j] * (S::one() - tc[j] * tc[j]);
            let d_o = dh * tc[j];
            let cp = c_prev.map_or(S::zero(), |c| c[j]);
            let d_f = dc * cp;
            let d_i = dc * gg[j];
            let d_g = dc * gi[j];
            dz[j] = d_i * gi[j] * (S::one() - gi[j]);
            dz[hidden + j] = d_f * gf[j] * (S::one() - gf[j]);
            dz[2 * hidden + j] = d_g * (S::one() - gg[j] * gg[j]);
            dz[3 * hidden + j] = d_o * go[j] * (S::one() - go[j]);
            dc *= gf[j];
            next_dc[j] = dc;
        }
        let x = &xs[pos];
        matvec_bwd_weight(&mut grads.wx, &dz, x);
        if let Some(hp) = h_prev {
            matvec_bwd_weight(&mut grads.wh, &dz, hp);
        }
        for j in 0..4 * hidden {
            grads.b[j] += dz[j];
        }
        matvec_bwd_input(&p.wx, &dz, &mut d_input[pos]);
        let mut new_carry_dh = vec![S::zero(); hidden];
        matvec_bwd_input(&p.wh, &dz, &mut new_carry_dh);
        carry_dh = new_carry_dh;
        carry_dc = next_dc;
    }
}

struct BiLayerCache<S> {
    input: Vec<Vec<S>>,
    fwd: DirCache<S>,
    bwd: DirCache<S>,
}

/// Everything needed to backpropagate one `encode` call.
pub struct EncodeCache<S> {
    relation: usize,
    layers: Vec<BiLayerCache<S>>,
    lstm_out: Vec<Vec<S>>,
    u1s: Vec<Vec<S>>,
    a1s: Vec<Vec<S>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encoder(dim: usize) -> PromptEncoder<f64> {
        PromptEncoder::new(
            Template::default(),
            dim,
            vec!["r0".into(), "r1".into()],
            42,
        )
        .unwrap()
    }

    #[test]
    fn produces_nine_vectors_of_dim_d() {
        let enc = encoder(16);
        let (vs, _) = enc.encode(0).unwrap();
        assert_eq!(vs.len(), 9);
        assert!(vs.iter().all(|v| v.len() == 16));
    }

    #[test]
    fn deterministic_and_relation_specific() {
        let enc = encoder(8);
        let (a, _) = enc.encode(0).unwrap();
        let (b, _) = enc.encode(0).unwrap();
        assert_eq!(a, b);
        let (c, _) = enc.encode(1).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn unknown_relation_errors() {
        let enc = encoder(8);
        assert!(enc.encode(5).is_err());
        assert!(enc.relation_index("nope").is_err());
        assert_eq!(enc.relation_index("r1").unwrap(), 1);
    }

    #[test]
    fn seed_perturbation_changes_output() {
        let mut enc = encoder(8);
        let (before, _) = enc.encode(0).unwrap();
        enc.seeds[0].row_mut(2)[3] += 0.05;
        let (after, _) = enc.encode(0).unwrap();
        assert_ne!(before, after, "gradient path from seeds must be live");
    }

    /// Finite differences through the whole encoder for a scalar readout.
    #[test]
    fn backward_matches_finite_differences() {
        let enc = encoder(6);
        // Scalar objective: weighted sum of all output vector entries.
        let weights: Vec<Vec<f64>> = (0..9)
            .map(|t| (0..6).map(|i| ((t * 6 + i) as f64 * 0.37).sin()).collect())
            .collect();
        let objective = |e: &PromptEncoder<f64>| -> f64 {
            let (vs, _) = e.encode(0).unwrap();
            vs.iter()
                .zip(&weights)
                .map(|(v, w)| v.iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
                .sum()
        };

        let (_, cache) = enc.encode(0).unwrap();
        let mut grads = enc.zeros_like();
        enc.backward(&cache, &weights, &mut grads);

        let h = 1e-5;
        let names_grads = grads.named_arrays();
        let mut enc_mut = enc.clone();
        // Probe a deterministic spread of coordinates in every array.
        for (arr_idx, (name, g)) in names_grads.iter().enumerate() {
            let len = g.len();
            for probe in 0..4.min(len) {
                let coord = (probe * 131 + arr_idx * 17) % len;
                let orig = {
                    let arrs = enc_mut.named_arrays();
                    arrs[arr_idx].1[coord]
                };
                {
                    let mut arrs = enc_mut.named_arrays_mut();
                    arrs[arr_idx].1[coord] = orig + h;
                }
                let up = objective(&enc_mut);
                {
                    let mut arrs = enc_mut.named_arrays_mut();
                    arrs[arr_idx].1[coord] = orig - h;
                }
                let down = objective(&enc_mut);
                {
                    let mut arrs = enc_mut.named_arrays_mut();
                    arrs[arr_idx].1[coord] = orig;
                }
                let num = (up - down) / (2.0 * h);
                let ana = g[coord];
                let denom = num.abs().max(ana.abs()).max(1e-7);
                assert!(
                    (num - ana).abs() / denom < 1e-3,
                    "{name}[{coord}]: fd {num} vs analytic {ana}"
                );
            }
        }
    }

    #[test]
    fn grads_flow_only_to_encoded_relation_seed() {
        let enc = encoder(6);
        let (vs, cache) = enc.encode(1).unwrap();
        let d: Vec<Vec<f64>> = vs.iter().map(|v| vec![1.0; v.len()]).collect();
        let mut grads = enc.zeros_like();
        enc.backward(&cache, &d, &mut grads);
        assert!(grads.seeds[0].data.iter().all(|&v| v == 0.0));
        assert!(grads.seeds[1].data.iter().any(|&v| v != 0.0));
    }
}
