use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::floor::{mean, SeedSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchOutcome {
    pub t: f64,
    /// Welch–Satterthwaite degrees of freedom.
    pub df: f64,
    pub p_two_sided: f64,
}

impl WelchOutcome {
    /// P(T ≥ t): evidence that the first set is larger.
    pub fn p_greater(&self) -> f64 {
        student_sf(self.t, self.df)
    }
}

fn student_sf(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive df");
    // use the symmetric tail to keep precision for large |t|
    if t > 0.0 {
        dist.cdf(-t)
    } else {
        1.0 - dist.cdf(t)
    }
}

fn welch_scores(a: &[f64], b: &[f64]) -> Result<WelchOutcome> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::contract("welch_t needs at least 2 seeds per set"));
    }
    let var = |x: &[f64]| {
        let m = mean(x).expect("non-empty");
        x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
    };
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (var(a) / na, var(b) / nb);
    let se2 = sa + sb;
    if se2 <= 0.0 {
        return Err(Error::contract("welch_t with zero variance in both sets"));
    }
    let diff = mean(a)? - mean(b)?;
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let p_two_sided = if t == 0.0 { 1.0 } else { (2.0 * student_sf(t.abs(), df)).min(1.0) };
    Ok(WelchOutcome { t, df, p_two_sided })
}

/// Welch's two-sample t-test of `a` against `b`.
pub fn welch_t(a: &SeedSet, b: &SeedSet) -> Result<WelchOutcome> {
    welch_scores(&a.scores(), &b.scores())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoufferOutcome {
    pub z: f64,
    /// One-sided upper-tail p of `z`.
    pub p: f64,
    /// Some input sat at 0 or 1 and was clamped.
    pub clamped: bool,
}

const P_CLAMP: f64 = 1e-12;

/// Stouffer's Z = Σ Φ⁻¹(1 − pᵢ)/√k over one-sided p-values.
pub fn stouffer_combine(p_one_sided: &[f64]) -> Result<StoufferOutcome> {
    if p_one_sided.is_empty() {
        return Err(Error::contract("stouffer_combine of no p-values"));
    }
    if let Some(bad) = p_one_sided.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::contract(format!("p-value {bad} outside [0, 1]")));
    }
    let std_normal = Normal::standard();
    let mut clamped = false;
    let sum: f64 = p_one_sided
        .iter()
        .map(|&p| {
            let c = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
            clamped |= c != p;
            // Φ⁻¹(1 − p) = −Φ⁻¹(p), exact at p = 0.5
            -std_normal.inverse_cdf(c)
        })
        .sum();
    let z = sum / (p_one_sided.len() as f64).sqrt();
    Ok(StoufferOutcome {
        z,
        p: std_normal.cdf(-z),
        clamped,
    })
}

/// Per-task one-sided Welch tests of `method > baseline`, combined with
/// Stouffer. Both sets need matching per-task seed accuracies.
pub fn per_task_stouffer(method: &SeedSet, baseline: &SeedSet) -> Result<StoufferOutcome> {
    let (Some(mt), Some(bt)) = (&method.per_task, &baseline.per_task) else {
        return Err(Error::contract("per_task_stouffer needs per-task accuracies"));
    };
    let mut ps = Vec::with_capacity(mt.len());
    for (task, accs) in mt {
        let base = bt
            .get(task)
            .ok_or_else(|| Error::contract(format!("baseline lacks task {task}")))?;
        ps.push(welch_scores(accs, base)?.p_greater());
    }
    stouffer_combine(&ps)
}
