use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the gradient-norm trajectory leading into (or without) a NaN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signature {
    SingleStepSpike,
    DirectCollapse,
    MonotoneRise,
    SustainedInflation,
    None,
}

impl Signature {
    pub fn as_str(self) -> &'static str {
        match self {
            Signature::SingleStepSpike => "single_step_spike",
            Signature::DirectCollapse => "direct_collapse",
            Signature::MonotoneRise => "monotone_rise",
            Signature::SustainedInflation => "sustained_inflation",
            Signature::None => "none",
        }
    }
}

/// Thresholds of the signature classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignatureRules {
    /// Last finite value above this multiple of the median is a spike.
    pub spike_ratio: f64,
    /// NaN right after a value within this multiple of the median is a collapse.
    pub collapse_ratio: f64,
    /// A strictly increasing run must grow by more than this factor.
    pub rise_ratio: f64,
    pub min_rise_len: usize,
    /// Multiple of the median that counts as inflated.
    pub inflation_ratio: f64,
    /// Fraction of the trailing window that must be inflated.
    pub inflation_share: f64,
    pub trailing_window: usize,
}

impl Default for SignatureRules {
    fn default() -> Self {
        SignatureRules {
            spike_ratio: 4.0,
            collapse_ratio: 1.5,
            rise_ratio: 10.0,
            min_rise_len: 3,
            inflation_ratio: 10.0,
            inflation_share: 0.25,
            trailing_window: 20,
        }
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Classify a gradient-norm window.
///
/// The window is read up to its first non-finite entry; a non-finite entry
/// marks the step that produced NaN. The reference level is the median of
/// the finite entries before the last one.
pub fn classify_signature(window: &[f64], rules: &SignatureRules) -> Result<Signature> {
    let cut = window.iter().position(|x| !x.is_finite());
    let finite = &window[..cut.unwrap_or(window.len())];
    if finite.len() < 2 {
        return Err(Error::contract(format!(
            "signature needs at least 2 finite entries before NaN, got {}",
            finite.len()
        )));
    }
    let nan = cut.is_some();
    let last = finite[finite.len() - 1];
    let reference = median(&finite[..finite.len() - 1]);

    let mut run = 1;
    while run < finite.len() && finite[finite.len() - run - 1] < finite[finite.len() - run] {
        run += 1;
    }
    let run_start = finite[finite.len() - run];
    if run >= rules.min_rise_len && last > rules.rise_ratio * run_start {
        return Ok(Signature::MonotoneRise);
    }

    let tail = &finite[finite.len().saturating_sub(rules.trailing_window)..];
    let inflated = tail.iter().filter(|&&x| x > rules.inflation_ratio * reference).count();
    if inflated as f64 > rules.inflation_share * tail.len() as f64 {
        return Ok(Signature::SustainedInflation);
    }

    if !nan {
        return Ok(Signature::None);
    }
    if last > rules.spike_ratio * reference {
        Ok(Signature::SingleStepSpike)
    } else if last <= rules.collapse_ratio * reference {
        Ok(Signature::DirectCollapse)
    } else {
        Ok(Signature::None)
    }
}

/// Ring buffer of logged (step, pre-clip grad norm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceMonitor {
    pub capacity: usize,
    pub window: VecDeque<(usize, f64)>,
    pub nan_step: Option<usize>,
}

impl DivergenceMonitor {
    pub fn new(capacity: usize) -> Self {
        DivergenceMonitor {
            capacity: capacity.max(2),
            window: VecDeque::with_capacity(capacity.max(2)),
            nan_step: None,
        }
    }

    pub fn record(&mut self, step: usize, grad_norm: f64) {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back((step, grad_norm));
    }

    /// Mark the NaN step and classify what led into it.
    pub fn diverge(&mut self, step: usize, rules: &SignatureRules) -> Signature {
        self.nan_step = Some(step);
        let mut norms: Vec<f64> = self.window.iter().map(|w| w.1).collect();
        norms.push(f64::NAN);
        // too little history to say anything about the shape
        classify_signature(&norms, rules).unwrap_or(Signature::None)
    }

    pub fn signature(&self, rules: &SignatureRules) -> Signature {
        let norms: Vec<f64> = self.window.iter().map(|w| w.1).collect();
        classify_signature(&norms, rules).unwrap_or(Signature::None)
    }
}
