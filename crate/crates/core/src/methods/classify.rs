//! Operational soft/hard test on observed attention weights.
//!
//! A head is soft when every row of its weights equals `c · softmax(logits)`
//! over the visible keys for some gate `c ∈ (0, 1]`: non-negative, and a
//! softmax up to a row-wise non-negative reweighting. Anything else is hard.

use super::spec::SoftHard;
use crate::model::AttnTrace;
use crate::scalar::Scalar;

const TOL: f64 = 1e-9;

/// Whether one causal row of weights is a scaled softmax of its logits.
pub fn is_scaled_softmax_row(logits: &[f64], weights: &[f64]) -> bool {
    if weights.iter().any(|&w| w < -TOL) {
        return false;
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let c: f64 = weights.iter().sum();
    if !(c > TOL && c <= 1.0 + TOL) {
        return false;
    }
    exps.iter()
        .zip(weights)
        .all(|(&e, &w)| (w - c * e / total).abs() <= TOL)
}

/// Classify a set of causal attention traces.
pub fn classify<T: Scalar>(traces: &[AttnTrace<T>]) -> SoftHard {
    let soft = traces.iter().all(|t| {
        (0..t.len).all(|i| {
            let row = |v: &[T]| -> Vec<f64> {
                v[i * t.len..i * t.len + i + 1].iter().map(|x| x.as_f64()).collect()
            };
            let masked_zero = t.weights[i * t.len + i + 1..(i + 1) * t.len]
                .iter()
                .all(|w| w.as_f64() == 0.0);
            masked_zero && is_scaled_softmax_row(&row(&t.logits), &row(&t.weights))
        })
    });
    if soft {
        SoftHard::Soft
    } else {
        SoftHard::Hard
    }
}
