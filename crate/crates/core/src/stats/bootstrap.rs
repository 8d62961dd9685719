use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::floor::SeedSet;
use crate::error::{Error, Result};

pub const DEFAULT_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOutcome {
    /// Percentile 95% interval of the floor's resampled mean.
    pub ci: (f64, f64),
    /// Same for the other set.
    pub other_ci: (f64, f64),
    /// Fraction of paired resamples where the other mean is below the
    /// floor mean, ties counting one half.
    pub p_leq: f64,
    pub resamples: usize,
    pub rng_seed: u64,
}

fn resample_mean(values: &[f64], rng: &mut ChaCha8Rng) -> f64 {
    let n = values.len();
    (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64
}

/// Nearest-rank percentile on sorted data, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx]
}

/// Seed-only paired bootstrap: each resample draws the floor's and the
/// other set's seeds with replacement from one seeded stream.
pub fn bootstrap_floor(
    floor: &SeedSet,
    other: &SeedSet,
    resamples: usize,
    rng_seed: u64,
) -> Result<BootstrapOutcome> {
    if resamples < 1000 {
        return Err(Error::contract(format!(
            "bootstrap needs at least 1000 resamples, got {resamples}"
        )));
    }
    let (a, b) = (floor.scores(), other.scores());
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut fa = Vec::with_capacity(resamples);
    let mut fb = Vec::with_capacity(resamples);
    // in half-units so ties count 1/2
    let mut leq = 0usize;
    for _ in 0..resamples {
        let ma = resample_mean(&a, &mut rng);
        let mb = resample_mean(&b, &mut rng);
        leq += match mb.total_cmp(&ma) {
            std::cmp::Ordering::Less => 2,
            std::cmp::Ordering::Equal => 1,
            std::cmp::Ordering::Greater => 0,
        };
        fa.push(ma);
        fb.push(mb);
    }
    fa.sort_by(f64::total_cmp);
    fb.sort_by(f64::total_cmp);
    Ok(BootstrapOutcome {
        ci: (percentile(&fa, 0.025), percentile(&fa, 0.975)),
        other_ci: (percentile(&fb, 0.025), percentile(&fb, 0.975)),
        p_leq: leq as f64 / (2 * resamples) as f64,
        resamples,
        rng_seed,
    })
}
