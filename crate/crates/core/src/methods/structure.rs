//! Attention-structure pieces shared by the decoder and the tests.

use crate::scalar::Scalar;
use crate::tensor::{AttnMask, Tensor};

/// Keys a masking head may suppress: strictly past positions other than column 0.
pub fn selective_visibility(len: usize) -> AttnMask {
    AttnMask::from_fn(len, len, |i, j| j < i && j > 0)
}

/// Subtractive mask from the scaled scores of one or more masking heads:
/// ReLU, then zero on the diagonal, column 0 and the future.
pub fn selective_mask<T: Scalar>(masking_logits: &[Tensor<T>]) -> Tensor<T> {
    assert!(!masking_logits.is_empty(), "selective mask needs a masking head");
    let len = masking_logits[0].rows();
    let keep = selective_visibility(len).indicator::<T>();
    masking_logits
        .iter()
        .map(|z| z.relu().mul_const(keep.clone()))
        .reduce(|a, b| a.add(&b))
        .expect("non-empty")
}

/// (1 − λ)·V + λ·V₁
pub fn value_residual<T: Scalar>(v: &Tensor<T>, first: &Tensor<T>, lambda: &Tensor<T>) -> Tensor<T> {
    let keep = lambda.neg().add_scalar(T::one());
    v.mul_scalar(&keep).add(&first.mul_scalar(lambda))
}

/// w₁ − λ·w₂
pub fn diff_weights<T: Scalar>(w1: &Tensor<T>, w2: &Tensor<T>, lambda: &Tensor<T>) -> Tensor<T> {
    w1.sub(&w2.mul_scalar(lambda))
}

/// Multiply one head's output rows by its gate values σ(W_g x) (one per row).
pub fn gated_output<T: Scalar>(head_out: &Tensor<T>, gate: &Tensor<T>) -> Tensor<T> {
    head_out.mul_col(gate)
}
