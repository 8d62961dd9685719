use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::methods::MethodTag;

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::contract("mean of an empty list"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Unbiased sample standard deviation (n − 1 denominator).
pub fn sample_std(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::contract(format!(
            "sample_std needs at least 2 values, got {}",
            values.len()
        )));
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|x| (x - m) * (x - m)).sum();
    Ok((ss / (values.len() - 1) as f64).sqrt())
}

/// Round to `figs` significant figures.
pub fn round_sig(x: f64, figs: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let scale = 10f64.powi(figs as i32 - 1 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}

/// Per-seed scores of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSet {
    pub method: MethodTag,
    /// (seed id, CLIMB-avg)
    pub values: Vec<(u64, f64)>,
    /// task → per-seed accuracies, aligned with `values`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_task: Option<BTreeMap<String, Vec<f64>>>,
}

impl SeedSet {
    pub fn new(method: MethodTag, values: Vec<(u64, f64)>) -> Result<Self> {
        let set = SeedSet {
            method,
            values,
            per_task: None,
        };
        set.validate()?;
        Ok(set)
    }

    /// Seeds numbered from `first_seed` upward.
    pub fn from_scores(method: MethodTag, first_seed: u64, scores: &[f64]) -> Result<Self> {
        SeedSet::new(
            method,
            scores
                .iter()
                .enumerate()
                .map(|(i, &x)| (first_seed + i as u64, x))
                .collect(),
        )
    }

    pub fn with_per_task(mut self, per_task: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        self.per_task = Some(per_task);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::contract(format!("{}: empty seed set", self.method)));
        }
        let mut ids: Vec<u64> = self.values.iter().map(|v| v.0).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::contract(format!("{}: duplicate seed id", self.method)));
        }
        if let Some(tasks) = &self.per_task {
            for (task, accs) in tasks {
                if accs.len() != self.values.len() {
                    return Err(Error::contract(format!(
                        "{}: task {task} has {} seeds, expected {}",
                        self.method,
                        accs.len(),
                        self.values.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn scores(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.1).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.scores()).expect("validated non-empty")
    }

    pub fn std(&self) -> Result<f64> {
        sample_std(&self.scores())
    }
}

/// Reference mean and seed-to-seed σ; z is measured in units of σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseFloor {
    pub mean: f64,
    pub std: f64,
}

impl NoiseFloor {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0 && std.is_finite() && mean.is_finite()) {
            return Err(Error::contract(format!(
                "noise floor needs a positive finite std, got {std}"
            )));
        }
        Ok(NoiseFloor { mean, std })
    }

    /// Unrounded mean and sample std of the seeds.
    pub fn from_seeds(seeds: &SeedSet) -> Result<Self> {
        NoiseFloor::new(seeds.mean(), seeds.std()?)
    }

    pub fn delta(&self, x: f64) -> f64 {
        x - self.mean
    }

    pub fn z(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }
}

/// `(x − mean(floor)) / sample_std(floor)` with unrounded statistics.
pub fn zscore(x: f64, floor: &SeedSet) -> Result<f64> {
    if floor.len() < 2 {
        return Err(Error::contract("zscore needs a floor of at least 2 seeds"));
    }
    Ok(NoiseFloor::from_seeds(floor)?.z(x))
}
