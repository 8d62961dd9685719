use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Settings for [`grad_check`].
#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Central-difference step, in [1e-7, 1e-3].
    pub step: f64,
    /// Coordinates sampled per parameter; smaller parameters are checked fully.
    pub coords_per_param: usize,
    /// Coordinates where both gradients are below this magnitude are skipped:
    /// their relative error is pure round-off.
    pub abs_floor: f64,
    /// Same, relative to the largest analytic gradient of the parameter.
    pub rel_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            coords_per_param: 12,
            abs_floor: 1e-8,
            rel_floor: 1e-2,
            seed: 0,
        }
    }
}

/// Compare backward-pass gradients with central differences.
///
/// `forward` rebuilds the scalar objective from the current parameter values.
/// Returns the maximum over sampled coordinates of
/// `|analytic − numeric| / (|analytic| + |numeric| + 1e-12)`.
pub fn grad_check<T: Scalar>(
    forward: impl Fn() -> Tensor<T>,
    params: &[Tensor<T>],
    cfg: &GradCheckConfig,
) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&cfg.step) {
        return Err(Error::contract(format!(
            "grad_check step {} outside [1e-7, 1e-3]",
            cfg.step
        )));
    }
    let loss = forward();
    if loss.numel() != 1 {
        return Err(Error::contract(format!(
            "grad_check requires a scalar output, got shape {:?}",
            loss.shape()
        )));
    }
    params.iter().for_each(Tensor::zero_grad);
    loss.backward()?;
    drop(loss);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let h = T::of(cfg.step);
    let mut worst = 0.0f64;
    for p in params {
        let analytic = p.grad().unwrap_or_else(|| vec![T::zero(); p.numel()]);
        let n = p.numel();
        let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.as_f64().abs()));
        let floor = cfg.abs_floor.max(cfg.rel_floor * scale);
        let coords: Vec<usize> = if n <= cfg.coords_per_param {
            (0..n).collect()
        } else {
            sample(&mut rng, n, cfg.coords_per_param).into_vec()
        };
        for i in coords {
            let orig = p.value()[i];
            p.update_value(|v| v[i] = orig + h);
            let up = forward().item();
            p.update_value(|v| v[i] = orig - h);
            let down = forward().item();
            p.update_value(|v| v[i] = orig);
            let numeric = ((up - down) / (h + h)).as_f64();
            let a = analytic[i].as_f64();
            if !numeric.is_finite() || !a.is_finite() {
                return Ok(f64::INFINITY);
            }
            if a.abs().max(numeric.abs()) < floor {
                continue;
            }
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-12);
            worst = worst.max(rel);
        }
    }
    params.iter().for_each(Tensor::zero_grad);
    Ok(worst)
}
