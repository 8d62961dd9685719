use super::results::{check_unique, order_desc, MethodScore};
use super::table::{signed, Table};
use crate::error::{Error, Result};
use crate::methods::MethodTag;
use crate::stats::NoiseFloor;

#[derive(Debug, Clone, PartialEq)]
pub struct LossRow {
    pub method: MethodTag,
    pub val_loss: f64,
    pub climb_avg: f64,
    pub z: f64,
    /// (loss − baseline loss) / baseline loss.
    pub relative_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossTable {
    pub rows: Vec<LossRow>,
}

/// Validation loss next to downstream score. Every row needs a loss, and the
/// baseline row is required as the gap reference.
pub fn loss_vs_climb_table(scores: &[MethodScore], floor: &NoiseFloor) -> Result<LossTable> {
    check_unique(scores)?;
    let loss_of = |s: &MethodScore| {
        s.val_loss
            .ok_or_else(|| Error::contract(format!("{} has no validation loss", s.method)))
    };
    let base = scores
        .iter()
        .find(|s| s.method == MethodTag::Baseline)
        .ok_or_else(|| Error::contract("loss table needs a baseline row"))?;
    let base_loss = loss_of(base)?;
    let mut rows = scores
        .iter()
        .map(|s| {
            let loss = loss_of(s)?;
            Ok(LossRow {
                method: s.method,
                val_loss: loss,
                climb_avg: s.climb_avg,
                z: if s.method == MethodTag::Baseline { 0.0 } else { floor.z(s.climb_avg) },
                relative_gap: (loss - base_loss) / base_loss,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| order_desc((a.climb_avg, a.method), (b.climb_avg, b.method)));
    Ok(LossTable { rows })
}

impl LossTable {
    pub fn row(&self, method: MethodTag) -> Option<&LossRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["Method", "Val loss", "CLIMB-avg", "z", "Loss gap"], 1);
        for r in &self.rows {
            t.push(vec![
                r.method.to_string(),
                format!("{:.4}", r.val_loss),
                format!("{:.4}", r.climb_avg),
                signed(r.z, 2),
                format!("{}%", signed(100.0 * r.relative_gap, 2)),
            ]);
        }
        t
    }
}
