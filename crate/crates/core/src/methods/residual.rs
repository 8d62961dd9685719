//! Residual-stream variants.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Σⱼ αⱼ·Xⱼ over a history of equally shaped tensors; `alpha` has one entry per item.
pub fn depth_weighted_average<T: Scalar>(history: &[Tensor<T>], alpha: &Tensor<T>) -> Tensor<T> {
    assert_eq!(history.len(), alpha.numel(), "one weight per history entry");
    let a = alpha.reshape(&[1, alpha.numel()]);
    history
        .iter()
        .enumerate()
        .map(|(j, x)| x.mul_scalar(&a.slice_cols(j, 1).reshape(&[1])))
        .reduce(|acc, t| acc.add(&t))
        .expect("non-empty history")
}

/// x + γ ⊙ branch
pub fn layerscale<T: Scalar>(x: &Tensor<T>, branch: &Tensor<T>, gamma: &Tensor<T>) -> Tensor<T> {
    x.add(&branch.mul_row(gamma))
}

/// Two-lane residual. The slow lane is an EMA of branch outputs with rate
/// σ(β_logit); the output is the standard residual plus α times the slow lane.
/// Returns (output, new slow lane).
pub fn hyper<T: Scalar>(
    x: &Tensor<T>,
    branch: &Tensor<T>,
    slow: Option<&Tensor<T>>,
    alpha: &Tensor<T>,
    beta_logit: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let beta = beta_logit.sigmoid();
    let fresh = branch.mul_scalar(&beta);
    let slow = match slow {
        Some(prev) => prev.mul_scalar(&beta.neg().add_scalar(T::one())).add(&fresh),
        None => fresh,
    };
    (x.add(branch).add(&slow.mul_scalar(alpha)), slow)
}

/// Softmax over candidates vᵢ of wᵀ·RMSNorm(vᵢ)/√d, applied per row; returns Σ αᵢ vᵢ.
pub fn attn_residual<T: Scalar>(
    candidates: &[Tensor<T>],
    query: &Tensor<T>,
    key_norm: Option<&Tensor<T>>,
    eps: T,
) -> Result<Tensor<T>> {
    if candidates.is_empty() {
        return Err(Error::contract("attention residual over an empty history"));
    }
    let d = query.numel();
    let rows = candidates[0].rows();
    let w = query.reshape(&[d, 1]);
    let inv_sqrt = T::one() / T::of_usize(d).sqrt();
    let scores: Vec<Tensor<T>> = candidates
        .iter()
        .map(|v| v.rmsnorm(key_norm, eps).matmul(&w).scale(inv_sqrt))
        .collect();
    let alpha = Tensor::concat_cols(&scores).softmax_rows(None);
    Ok(candidates
        .iter()
        .enumerate()
        .map(|(i, v)| v.mul_col(&alpha.slice_cols(i, 1).reshape(&[rows])))
        .reduce(|acc, t| acc.add(&t))
        .expect("non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::constant(v.to_vec(), &[1, v.len()])
    }

    #[test]
    fn identity_weights_select_latest() {
        let hist = [t(&[1.0, 2.0]), t(&[3.0, -4.0])];
        let a = Tensor::constant(vec![0.0, 1.0], &[2]);
        assert_eq!(depth_weighted_average(&hist, &a).to_vec(), vec![3.0, -4.0]);
    }

    #[test]
    fn hyper_at_zero_alpha_is_plain_residual() {
        let (x, b) = (t(&[0.3, 0.1]), t(&[-2.0, 5.0]));
        let (out, slow) = hyper(&x, &b, None, &Tensor::scalar(0.0), &Tensor::scalar(-2.2));
        assert_eq!(out.to_vec(), x.add(&b).to_vec());
        let beta = 1.0 / (1.0 + 2.2f64.exp());
        assert_abs_diff_eq!(beta, 0.0997, epsilon = 1e-4);
        assert_abs_diff_eq!(slow.to_vec()[1], 5.0 * beta, epsilon = 1e-15);
    }

    #[test]
    fn zero_query_averages_candidates() {
        let c = [t(&[1.0, 0.0]), t(&[0.0, 2.0]), t(&[-1.0, 4.0])];
        let q = Tensor::constant(vec![0.0, 0.0], &[2]);
        let out = attn_residual(&c, &q, None, 1e-5).unwrap().to_vec();
        assert_abs_diff_eq!(out[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], 2.0, epsilon = 1e-15);
        assert!(attn_residual::<f64>(&[], &q, None, 1e-5).is_err());
    }

    #[test]
    fn layerscale_bound() {
        let (x, b) = (t(&[1.0, 2.0, 3.0]), t(&[0.5, -7.0, 2.0]));
        let g = Tensor::constant(vec![1e-4; 3], &[3]);
        let out = layerscale(&x, &b, &g).to_vec();
        let diff: f64 = out.iter().zip(x.to_vec()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let fnorm: f64 = b.to_vec().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(diff <= 1e-4 * fnorm * (1.0 + 1e-12));
    }
}
