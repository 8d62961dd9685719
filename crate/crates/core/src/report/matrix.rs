use std::collections::BTreeMap;

use super::results::{climb_avg, TASKS};
use super::table::Table;
use crate::error::Result;

/// Per-task accuracy deltas of labelled rows against a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaMatrix {
    /// (row label, CLIMB-avg, delta per task in task order)
    pub rows: Vec<(String, f64, Vec<f64>)>,
}

/// Rows are ordered by descending CLIMB-avg, ties by label.
pub fn per_task_delta_matrix(
    results: &[(String, BTreeMap<String, f64>)],
    reference: &BTreeMap<String, f64>,
) -> Result<DeltaMatrix> {
    climb_avg(reference)?;
    let mut rows = Vec::with_capacity(results.len());
    for (label, per_task) in results {
        let avg = climb_avg(per_task)?;
        let deltas = TASKS.iter().map(|t| per_task[*t] - reference[*t]).collect();
        rows.push((label.clone(), avg, deltas));
    }
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(DeltaMatrix { rows })
}

impl DeltaMatrix {
    pub fn get(&self, label: &str, task: &str) -> Option<f64> {
        let col = TASKS.iter().position(|t| *t == task)?;
        self.rows.iter().find(|r| r.0 == label).map(|r| r.2[col])
    }

    /// Full-precision values, one row per label, for heatmap rendering.
    pub fn to_table(&self) -> Table {
        let mut headers = vec!["method"];
        headers.extend(TASKS);
        let mut t = Table::new(&headers, 1);
        for (label, _, deltas) in &self.rows {
            let mut row = vec![label.clone()];
            row.extend(deltas.iter().map(f64::to_string));
            t.push(row);
        }
        t
    }
}
