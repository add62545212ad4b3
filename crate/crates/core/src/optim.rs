//! Adam over named parameter arrays.

use crate::scalar::Scalar;

/// Standard Adam with bias correction. State vectors are allocated on the
/// first step and keyed by array order, which is stable for every parameter
/// struct in this crate.
pub struct Adam<S> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. `params` and `grads` must list the same arrays
    /// in the same order on every call.
    pub fn step(&mut self, mut params: Vec<(String, &mut [S])>, grads: &[(String, &[S])]) {
        assert_eq!(params.len(), grads.len(), "param/grad array count mismatch");
        if self.m.is_empty() {
            self.m = params.iter().map(|(_, p)| vec![S::zero(); p.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = S::from_f64(self.beta1);
        let b2 = S::from_f64(self.beta2);
        let eps = S::from_f64(self.eps);
        let lr_t = S::from_f64(
            self.lr * (1.0 - self.beta2.powi(t)).sqrt() / (1.0 - self.beta1.powi(t)),
        );
        for (idx, ((pname, p), (gname, g))) in params.iter_mut().zip(grads).enumerate() {
            assert_eq!(pname, gname, "param/grad name mismatch at {idx}");
            crate::linalg::adam_update(p, g, &mut self.m[idx], &mut self.v[idx], b1, b2, lr_t, eps);
        }
    }
}
