use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimizer and schedule shared by every method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecipeConfig {
    pub lr_peak: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    /// The cosine ends at `final_lr_fraction · lr_peak`.
    pub final_lr_fraction: f64,
    pub tokens_per_step: usize,
}

impl Default for RecipeConfig {
    fn default() -> Self {
        RecipeConfig::full()
    }
}

impl RecipeConfig {
    /// The full-scale recipe: 44k steps of 2²⁰ tokens.
    pub fn full() -> Self {
        RecipeConfig {
            lr_peak: 3e-4,
            betas: (0.9, 0.95),
            eps: 1e-8,
            weight_decay: 0.1,
            clip_norm: 1.0,
            warmup_steps: 2000,
            total_steps: 44_000,
            final_lr_fraction: 0.1,
            tokens_per_step: 1 << 20,
        }
    }

    /// Desk-scale recipe for the toy config: 200 steps of 8×32 tokens.
    pub fn toy() -> Self {
        RecipeConfig {
            lr_peak: 3e-3,
            warmup_steps: 20,
            total_steps: 200,
            tokens_per_step: 256,
            ..RecipeConfig::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr_peak", self.lr_peak),
            ("eps", self.eps),
            ("clip_norm", self.clip_norm),
            ("final_lr_fraction", self.final_lr_fraction),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::config(format!("recipe {name} must be positive, got {v}")));
        }
        if !(0.0..1.0).contains(&self.betas.0) || !(0.0..1.0).contains(&self.betas.1) {
            return Err(Error::config(format!("recipe betas {:?} outside [0, 1)", self.betas)));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::config("recipe weight_decay must be non-negative"));
        }
        if self.total_steps == 0 || self.tokens_per_step == 0 {
            return Err(Error::config("recipe total_steps and tokens_per_step must be positive"));
        }
        if self.warmup_steps >= self.total_steps {
            return Err(Error::config(format!(
                "warmup_steps {} must be below total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        Ok(())
    }
}

/// Linear warm-up from 0 to `lr_peak`, then cosine down to
/// `final_lr_fraction · lr_peak` at `total_steps`.
pub fn lr_at_step(step: usize, r: &RecipeConfig) -> Result<f64> {
    if step > r.total_steps {
        return Err(Error::contract(format!(
            "step {step} beyond total_steps {}",
            r.total_steps
        )));
    }
    if step < r.warmup_steps {
        return Ok(r.lr_peak * step as f64 / r.warmup_steps as f64);
    }
    let progress = (step - r.warmup_steps) as f64 / (r.total_steps - r.warmup_steps) as f64;
    let floor = r.final_lr_fraction * r.lr_peak;
    let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
    Ok(floor + (r.lr_peak - floor) * cosine)
}
