//! Minimal dense matrix/vector kernels.
//!
//! Row-major `Mat<S>` plus the handful of fused forward/backward primitives
//! the models need. No BLAS; sequences here are short (a prompt is ~13
//! slots) and dimensions small, so straight loops vectorize fine.

use crate::scalar::{sample_gaussian, Scalar};
use rand::Rng;

/// Row-major dense matrix, `rows x cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    /// Entries drawn i.i.d. from N(0, std^2).
    pub fn gaussian<R: Rng>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| {
                let g: S = sample_gaussian(rng);
                g * S::from_f64(std)
            })
            .collect();
        Mat { rows, cols, data }
    }

    /// Entries drawn i.i.d. from U(-bound, bound).
    pub fn uniform<R: Rng>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| S::from_f64(rng.gen_range(-bound..bound)))
            .collect();
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = S::zero());
    }
}

/// y += W x, where W is `out x in` and y has length `out`.
pub fn matvec_acc<S: Scalar>(w: &Mat<S>, x: &[S], y: &mut [S]) {
    debug_assert_eq!(w.cols, x.len());
    debug_assert_eq!(w.rows, y.len());
    for o in 0..w.rows {
        y[o] += dot(w.row(o), x);
    }
}

/// y = W x.
pub fn matvec<S: Scalar>(w: &Mat<S>, x: &[S]) -> Vec<S> {
    let mut y = vec![S::zero(); w.rows];
    matvec_acc(w, x, &mut y);
    y
}

/// Backward of y = W x into the input: dx += W^T dy.
pub fn matvec_bwd_input<S: Scalar>(w: &Mat<S>, dy: &[S], dx: &mut [S]) {
    debug_assert_eq!(w.rows, dy.len());
    debug_assert_eq!(w.cols, dx.len());
    for (row, &g) in w.data.chunks_exact(w.cols).zip(dy) {
        for (d, &v) in dx.iter_mut().zip(row) {
            *d += g * v;
        }
    }
}

/// Backward of y = W x into the weights: dW += dy x^T.
pub fn matvec_bwd_weight<S: Scalar>(dw: &mut Mat<S>, dy: &[S], x: &[S]) {
    debug_assert_eq!(dw.rows, dy.len());
    debug_assert_eq!(dw.cols, x.len());
    let cols = dw.cols;
    for (row, &g) in dw.data.chunks_exact_mut(cols).zip(dy) {
        for (d, &v) in row.iter_mut().zip(x) {
            *d += g * v;
        }
    }
}

/// Fused Adam coordinate update over one parameter array.
pub fn adam_update<S: Scalar>(
    p: &mut [S],
    g: &[S],
    m: &mut [S],
    v: &mut [S],
    b1: S,
    b2: S,
    lr_t: S,
    eps: S,
) {
    let one = S::one();
    for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        *p -= lr_t * *m / (v.sqrt() + eps);
    }
}

/// Dot product with eight independent accumulator lanes. The fixed lane
/// grouping keeps results deterministic while letting the compiler emit
/// vector code (a single serial accumulator cannot be reordered).
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [S::zero(); 8];
    for (ar, br) in a.chunks_exact(8).zip(b.chunks_exact(8)) {
        for l in 0..8 {
            lanes[l] += ar[l] * br[l];
        }
    }
    let rem = a.len() - a.len() % 8;
    let mut tail = S::zero();
    for (&x, &y) in a[rem..].iter().zip(&b[rem..]) {
        tail += x * y;
    }
    let pair = |x: S, y: S| x + y;
    pair(
        pair(pair(lanes[0], lanes[4]), pair(lanes[2], lanes[6])),
        pair(pair(lanes[1], lanes[5]), pair(lanes[3], lanes[7])),
    ) + tail
}

/// y += alpha * x.
pub fn axpy<S: Scalar>(alpha: S, x: &[S], y: &mut [S]) {
    debug_assert_eq!(x.len(), y.len());
    for i in 0..x.len() {
        y[i] += alpha * x[i];
    }
}

pub fn add_assign<S: Scalar>(y: &mut [S], x: &[S]) {
    axpy(S::one(), x, y);
}

/// Numerically stable log-softmax.
pub fn log_softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let max = logits
        .iter()
        .cloned()
        .fold(S::neg_infinity(), |a, b| if b > a { b } else { a });
    let mut sum = S::zero();
    for &v in logits {
        sum += (v - max).exp();
    }
    let lse = max + sum.ln();
    logits.iter().map(|&v| v - lse).collect()
}

/// Numerically stable softmax (in place).
pub fn softmax_inplace<S: Scalar>(x: &mut [S]) {
    let max = x
        .iter()
        .cloned()
        .fold(S::neg_infinity(), |a, b| if b > a { b } else { a });
    let mut sum = S::zero();
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

/// log(sum(exp(x))) without overflow.
pub fn log_sum_exp<S: Scalar>(x: &[S]) -> S {
    let max = x
        .iter()
        .cloned()
        .fold(S::neg_infinity(), |a, b| if b > a { b } else { a });
    if max == S::neg_infinity() {
        return S::neg_infinity();
    }
    let mut sum = S::zero();
    for &v in x {
        sum += (v - max).exp();
    }
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_matches_manual() {
        let w = Mat {
            rows: 2,
            cols: 3,
            data: vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0],
        };
        let y = matvec(&w, &[1.0, 0.5, -1.0]);
        assert_eq!(y, vec![1.0 + 1.0 - 3.0, 4.0 + 2.5 - 6.0]);
    }

    #[test]
    fn log_softmax_normalizes() {
        let ls = log_softmax(&[0.3f64, -1.2, 2.0, 0.0]);
        let total: f64 = ls.iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matvec_backward_is_transpose() {
        let w = Mat {
            rows: 2,
            cols: 2,
            data: vec![1.0f64, 2.0, 3.0, 4.0],
        };
        let mut dx = vec![0.0; 2];
        matvec_bwd_input(&w, &[1.0, 1.0], &mut dx);
        assert_eq!(dx, vec![4.0, 6.0]);
    }
}
