use super::results::{check_unique, order_desc, MethodScore};
use super::table::{sci, signed, Table};
use crate::error::Result;
use crate::methods::MethodTag;
use crate::stats::{p_bonferroni, p_two_sided, NoiseFloor, FAMILY_SIZE};

#[derive(Debug, Clone, PartialEq)]
pub struct RankRow {
    pub method: MethodTag,
    pub climb_avg: f64,
    pub delta: f64,
    pub z: f64,
    /// Absent for the reference row.
    pub p_bonf: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    pub rows: Vec<RankRow>,
}

/// Rank methods against the baseline noise floor.
///
/// The baseline row always carries the floor mean, whatever score was
/// supplied for it.
pub fn rank_table(scores: &[MethodScore], floor: &NoiseFloor) -> Result<RankTable> {
    check_unique(scores)?;
    let mut rows: Vec<RankRow> = scores
        .iter()
        .filter(|s| s.method != MethodTag::Baseline)
        .map(|s| {
            let z = floor.z(s.climb_avg);
            RankRow {
                method: s.method,
                climb_avg: s.climb_avg,
                delta: floor.delta(s.climb_avg),
                z,
                p_bonf: Some(p_bonferroni(p_two_sided(z), FAMILY_SIZE)),
            }
        })
        .collect();
    rows.push(RankRow {
        method: MethodTag::Baseline,
        climb_avg: floor.mean,
        delta: 0.0,
        z: 0.0,
        p_bonf: None,
    });
    rows.sort_by(|a, b| order_desc((a.climb_avg, a.method), (b.climb_avg, b.method)));
    Ok(RankTable { rows })
}

impl RankTable {
    pub fn row(&self, method: MethodTag) -> Option<&RankRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// 1-based position of `method`.
    pub fn rank(&self, method: MethodTag) -> Option<usize> {
        self.rows.iter().position(|r| r.method == method).map(|i| i + 1)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["Method", "CLIMB-avg", "Δ", "z", "p_Bonf"], 1);
        for r in &self.rows {
            t.push(vec![
                r.method.to_string(),
                format!("{:.4}", r.climb_avg),
                signed(r.delta, 3),
                signed(r.z, 2),
                r.p_bonf.map(sci).unwrap_or_default(),
            ]);
        }
        t
    }

    pub fn to_raw_table(&self) -> Table {
        let mut t = Table::new(&["method", "climb_avg", "delta", "z", "p_bonf"], 1);
        for r in &self.rows {
            t.push(vec![
                r.method.to_string(),
                r.climb_avg.to_string(),
                r.delta.to_string(),
                r.z.to_string(),
                r.p_bonf.map(|p| p.to_string()).unwrap_or_default(),
            ]);
        }
        t
    }
}
