//! Score-to-weight transforms for a single attention head.
//!
//! Each transform is split in two so structural variants can edit the logits
//! in between: [`logits`] turns raw `q·kᵀ` into pre-activation logits and
//! [`weights`] turns logits into mixing weights under a visibility mask.

use super::spec::Mixing;
use crate::scalar::Scalar;
use crate::tensor::{AttnMask, Tensor};

/// Learnable per-head quantities some transforms need.
#[derive(Debug, Clone, Default)]
pub struct MixingParams<T: Scalar> {
    /// Sigmoid bias, one element.
    pub bias: Option<Tensor<T>>,
    /// Raw SSMax scale logit for this head, one element.
    pub s_logit: Option<Tensor<T>>,
}

/// s = softplus(s_logit) + 0.5
pub fn ssmax_scale<T: Scalar>(s_logit: &Tensor<T>) -> Tensor<T> {
    s_logit.softplus().add_scalar(T::of(0.5))
}

fn per_row<T: Scalar>(mask: &AttnMask, f: impl Fn(usize) -> T) -> Vec<T> {
    mask.visible_counts()
        .into_iter()
        .flat_map(|n| std::iter::repeat_n(f(n), mask.cols()))
        .collect()
}

/// Pre-activation logits from raw scores `q·kᵀ` of one head.
pub fn logits<T: Scalar>(
    kind: Mixing,
    raw: &Tensor<T>,
    d_head: usize,
    mask: &AttnMask,
    params: &MixingParams<T>,
) -> Tensor<T> {
    let inv_sqrt = T::one() / T::of_usize(d_head).sqrt();
    match kind {
        Mixing::Softmax | Mixing::Softpick => raw.scale(inv_sqrt),
        Mixing::Cap { limit } => raw.scale(inv_sqrt).clamp(T::of(-limit), T::of(limit)),
        Mixing::Sigmoid { .. } => {
            let b = params.bias.as_ref().expect("sigmoid mixing needs its bias");
            raw.scale(inv_sqrt).add_scalar_tensor(b)
        }
        Mixing::Ssmax { .. } => {
            let s = params.s_logit.as_ref().expect("ssmax mixing needs its scale");
            let ln_n = per_row(mask, |n| T::of_usize(n.max(1)).ln());
            raw.mul_const(ln_n).mul_scalar(&ssmax_scale(s))
        }
    }
}

/// Mixing weights from logits. `seq_len` is the sequence length used by the
/// sigmoid normaliser. The flag reports rows with no visible key.
pub fn weights<T: Scalar>(
    kind: Mixing,
    logits: &Tensor<T>,
    mask: &AttnMask,
    seq_len: usize,
) -> (Tensor<T>, bool) {
    match kind {
        Mixing::Softmax | Mixing::Cap { .. } | Mixing::Ssmax { .. } => {
            logits.softmax_rows_flagged(Some(mask))
        }
        Mixing::Softpick => softpick(logits, mask),
        Mixing::Sigmoid { .. } => {
            let empty = mask.visible_counts().contains(&0);
            let w = logits
                .sigmoid()
                .scale(T::one() / T::of_usize(seq_len))
                .mul_const(mask.indicator());
            (w, empty)
        }
    }
}

/// ReLU(softmax(z) − 1/n) with n the number of visible keys in each row.
pub fn softpick<T: Scalar>(logits: &Tensor<T>, mask: &AttnMask) -> (Tensor<T>, bool) {
    let (p, empty) = logits.softmax_rows_flagged(Some(mask));
    let shift = per_row(mask, |n| {
        if n == 0 {
            T::zero()
        } else {
            -(T::one() / T::of_usize(n))
        }
    });
    (p.add_const(shift).relu(), empty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn full(n: usize) -> AttnMask {
        AttnMask::from_fn(1, n, |_, _| true)
    }

    #[test]
    fn softpick_uniform_logits_are_zero() {
        for n in 1..9 {
            let z = Tensor::<f64>::constant(vec![0.7; n], &[1, n]);
            let (w, _) = softpick(&z, &full(n));
            assert!(w.to_vec().iter().all(|&x| x == 0.0), "n={n}");
        }
    }

    #[test]
    fn softpick_breaks_row_sum() {
        let z = Tensor::<f64>::constant(vec![10.0, -10.0], &[1, 2]);
        let w = softpick(&z, &full(2)).0.to_vec();
        let expect = 1.0 / (1.0 + (-20f64).exp()) - 0.5;
        assert_abs_diff_eq!(w[0], expect, epsilon = 1e-15);
        assert!(w[0] > 0.49995 && w[0] < 0.5);
        assert_eq!(w[1], 0.0);
    }

    #[test]
    fn cap_clamps_before_softmax() {
        let m = full(2);
        let raw = Tensor::<f64>::constant(vec![75.0 * 8.0, 0.0], &[1, 2]);
        let capped = logits(Mixing::Cap { limit: 50.0 }, &raw, 64, &m, &Default::default());
        assert_eq!(capped.to_vec(), vec![50.0, 0.0]);
    }

    #[test]
    fn ssmax_temperature_at_init() {
        let s = ssmax_scale(&Tensor::<f64>::scalar(0.0)).item();
        assert_abs_diff_eq!(s, 2f64.ln() + 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s, 1.1931, epsilon = 1e-4);
        let temp = 1.0 / (s * 1024f64.ln());
        assert!((temp - 0.125).abs() / 0.125 < 0.04, "{temp}");
    }

    #[test]
    fn sigmoid_rows_need_not_sum_to_one() {
        let m = AttnMask::causal(3);
        let b = Tensor::<f64>::scalar(0.0);
        let raw = Tensor::<f64>::constant(vec![1.0, 0.0, 0.0, 2.0, -1.0, 0.0, 0.5, 0.5, 3.0], &[3, 3]);
        let params = MixingParams {
            bias: Some(b),
            s_logit: None,
        };
        let kind = Mixing::Sigmoid { bias_init: 0.0 };
        let z = logits(kind, &raw, 4, &m, &params);
        let (w, _) = weights(kind, &z, &m, 3);
        let w = w.to_vec();
        assert_eq!(w[1], 0.0);
        let row0: f64 = w[..3].iter().sum();
        assert!((row0 - 1.0).abs() > 1e-6);
        assert_abs_diff_eq!(row0, 1.0 / (1.0 + (-0.5f64).exp()) / 3.0, epsilon = 1e-15);
    }
}
