use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::recipe::RecipeConfig;

/// Global L2 norm over every gradient.
pub fn global_norm<T: Scalar>(grads: &[Vec<T>]) -> f64 {
    grads
        .iter()
        .flatten()
        .map(|g| {
            let x = g.as_f64();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

/// Rescale so the global norm is at most `max_norm`; returns the norm before
/// clipping.
pub fn clip_grad<T: Scalar>(grads: &mut [Vec<T>], max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "clip norm must be positive");
    let norm = global_norm(grads);
    if norm > max_norm {
        let scale = T::of(max_norm / norm);
        grads.iter_mut().flatten().for_each(|g| *g *= scale);
    }
    norm
}

/// AdamW with decoupled weight decay and bias-corrected moments.
///
/// Decay applies to matrices only; norm scales, gates and scalar
/// parameters are left undecayed.
#[derive(Debug, Clone)]
pub struct AdamW<T: Scalar> {
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    decay: Vec<bool>,
    step: usize,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(params: &[Tensor<T>]) -> Self {
        AdamW {
            first: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            second: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            decay: params.iter().map(|p| p.shape().len() >= 2).collect(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// First-moment estimate of parameter `i`.
    pub fn first_moment(&self, i: usize) -> &[T] {
        &self.first[i]
    }

    /// One update. A non-finite gradient leaves parameters and state
    /// untouched and reports divergence.
    pub fn step(&mut self, params: &[Tensor<T>], grads: &[Vec<T>], lr: f64, r: &RecipeConfig) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::contract("optimizer state does not match parameters"));
        }
        if grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                step: self.step + 1,
                reason: "non-finite gradient".into(),
            });
        }
        self.step += 1;
        let (b1, b2) = r.betas;
        let t = self.step as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let (b1t, b2t) = (T::of(b1), T::of(b2));
        let (one, eps) = (T::one(), T::of(r.eps));
        for (i, p) in params.iter().enumerate() {
            let decay = T::of(if self.decay[i] { 1.0 - lr * r.weight_decay } else { 1.0 });
            let (m, v, g) = (&mut self.first[i], &mut self.second[i], &grads[i]);
            p.update_value(|w| {
                for j in 0..w.len() {
                    m[j] = b1t * m[j] + (one - b1t) * g[j];
                    v[j] = b2t * v[j] + (one - b2t) * g[j] * g[j];
                    let m_hat = m[j] / T::of(c1);
                    let v_hat = v[j] / T::of(c2);
                    w[j] = w[j] * decay - T::of(lr) * m_hat / (v_hat.sqrt() + eps);
                }
            });
        }
        Ok(())
    }
}
