use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::methods::MethodTag;

/// Evaluation tasks averaged into CLIMB-avg, as lm-evaluation-harness ids.
pub const TASKS: [&str; 12] = [
    "piqa",
    "arc_challenge",
    "arc_easy",
    "hellaswag",
    "winogrande",
    "social_iqa",
    "mmlu",
    "openbookqa",
    "boolq",
    "race",
    "lambada_openai",
    "truthfulqa_mc2",
];

/// Unweighted mean over the twelve tasks.
pub fn climb_avg(per_task: &BTreeMap<String, f64>) -> Result<f64> {
    if let Some(extra) = per_task.keys().find(|k| !TASKS.contains(&k.as_str())) {
        return Err(Error::contract(format!("unknown task {extra}")));
    }
    let mut sum = 0.0;
    for task in TASKS {
        let acc = per_task
            .get(task)
            .ok_or_else(|| Error::contract(format!("missing task {task}")))?;
        if !(0.0..=1.0).contains(acc) {
            return Err(Error::contract(format!("{task} accuracy {acc} outside [0, 1]")));
        }
        sum += acc;
    }
    Ok(sum / TASKS.len() as f64)
}

/// One evaluated checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsFile {
    pub method: MethodTag,
    pub scale: String,
    pub seed: u64,
    pub per_task: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
    /// Free-form note on how the numbers were produced (few-shot settings, harness version).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

impl ResultsFile {
    pub fn climb_avg(&self) -> Result<f64> {
        climb_avg(&self.per_task)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ResultsFile =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        file.climb_avg()?;
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::parse(path, e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// A method's aggregate score at one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: MethodTag,
    pub climb_avg: f64,
    #[serde(default)]
    pub val_loss: Option<f64>,
    #[serde(default = "one")]
    pub n_seeds: usize,
}

fn one() -> usize {
    1
}

impl MethodScore {
    pub fn new(method: MethodTag, climb_avg: f64) -> Self {
        MethodScore {
            method,
            climb_avg,
            val_loss: None,
            n_seeds: 1,
        }
    }

    pub fn with_loss(mut self, val_loss: f64) -> Self {
        self.val_loss = Some(val_loss);
        self
    }
}

/// Seed-average the results of one scale. Repeated (method, seed) pairs are
/// a contract error.
pub fn aggregate(results: &[ResultsFile], scale: &str) -> Result<Vec<MethodScore>> {
    let mut seen = BTreeSet::new();
    let mut by_method: BTreeMap<MethodTag, Vec<&ResultsFile>> = BTreeMap::new();
    for r in results.iter().filter(|r| r.scale == scale) {
        if !seen.insert((r.method, r.seed)) {
            return Err(Error::contract(format!(
                "duplicate results for {} seed {} at scale {scale}",
                r.method, r.seed
            )));
        }
        by_method.entry(r.method).or_default().push(r);
    }
    by_method
        .into_iter()
        .map(|(method, runs)| {
            let n = runs.len() as f64;
            let mut climb = 0.0;
            for r in &runs {
                climb += r.climb_avg()?;
            }
            let losses: Option<Vec<f64>> = runs.iter().map(|r| r.val_loss).collect();
            Ok(MethodScore {
                method,
                climb_avg: climb / n,
                val_loss: losses.map(|l| l.iter().sum::<f64>() / n),
                n_seeds: runs.len(),
            })
        })
        .collect()
}

/// Read `method,climb_avg[,val_loss]` rows.
pub fn read_scores_csv(path: impl AsRef<Path>) -> Result<Vec<MethodScore>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let score: MethodScore = row.map_err(|e| Error::parse(path, e.to_string()))?;
        out.push(score);
    }
    Ok(out)
}

pub(crate) fn check_unique(scores: &[MethodScore]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for s in scores {
        if !seen.insert(s.method) {
            return Err(Error::contract(format!("duplicate row for {}", s.method)));
        }
    }
    Ok(())
}

/// Descending score, ties broken by tag name.
pub(crate) fn order_desc(a: (f64, MethodTag), b: (f64, MethodTag)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.as_str().cmp(b.1.as_str()))
}
