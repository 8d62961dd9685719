use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

/// Two-sided normal tail probability of `z`.
pub fn p_two_sided(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// `min(1, m·p)`.
pub fn p_bonferroni(p: f64, m: usize) -> f64 {
    (p * m as f64).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Correction {
    Bonferroni { m: usize },
    Holm,
    BenjaminiHochberg { q: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionOutcome {
    /// Adjusted p-values aligned with the input.
    pub adjusted: Vec<f64>,
    pub rejected: Vec<bool>,
}

impl CorrectionOutcome {
    pub fn rejected_indices(&self) -> Vec<usize> {
        (0..self.rejected.len()).filter(|&i| self.rejected[i]).collect()
    }
}

pub fn bonferroni(p: &[f64], m: usize, alpha: f64) -> CorrectionOutcome {
    let adjusted: Vec<f64> = p.iter().map(|&x| p_bonferroni(x, m)).collect();
    let rejected = adjusted.iter().map(|&a| a <= alpha).collect();
    CorrectionOutcome { adjusted, rejected }
}

fn ascending(p: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&i, &j| p[i].total_cmp(&p[j]).then(i.cmp(&j)));
    order
}

/// Holm step-down at family-wise level `alpha`.
pub fn holm(p: &[f64], alpha: f64) -> CorrectionOutcome {
    let m = p.len();
    let order = ascending(p);
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (k, &i) in order.iter().enumerate() {
        running = running.max(((m - k) as f64 * p[i]).min(1.0));
        adjusted[i] = running;
    }
    let rejected = adjusted.iter().map(|&a| a <= alpha).collect();
    CorrectionOutcome { adjusted, rejected }
}

/// Benjamini–Hochberg step-up at false-discovery rate `q`.
pub fn benjamini_hochberg(p: &[f64], q: f64) -> CorrectionOutcome {
    let m = p.len();
    let order = ascending(p);
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (k, &i) in order.iter().enumerate().rev() {
        running = running.min(p[i] * m as f64 / (k + 1) as f64).min(1.0);
        adjusted[i] = running;
    }
    // largest k with p_(k) ≤ k·q/m; everything ranked at or below it is rejected
    let cutoff = order
        .iter()
        .enumerate()
        .filter(|(k, &i)| p[i] <= (k + 1) as f64 * q / m as f64)
        .map(|(k, _)| k + 1)
        .max()
        .unwrap_or(0);
    let mut rejected = vec![false; m];
    for &i in &order[..cutoff] {
        rejected[i] = true;
    }
    CorrectionOutcome { adjusted, rejected }
}

pub fn correct(p: &[f64], scheme: Correction, alpha: f64) -> CorrectionOutcome {
    match scheme {
        Correction::Bonferroni { m } => bonferroni(p, m, alpha),
        Correction::Holm => holm(p, alpha),
        Correction::BenjaminiHochberg { q } => benjamini_hochberg(p, q),
    }
}
