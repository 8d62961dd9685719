use std::collections::BTreeSet;
use std::fmt;

use super::results::{check_unique, order_desc, MethodScore};
use super::table::{signed, Table};
use crate::error::{Error, Result};
use crate::methods::MethodTag;

/// One scale's scores and the row deltas are measured against.
#[derive(Debug, Clone, Copy)]
pub struct ScaleScores<'a> {
    pub label: &'a str,
    pub scores: &'a [MethodScore],
    pub reference: MethodTag,
}

impl ScaleScores<'_> {
    fn reference_value(&self) -> Result<f64> {
        self.scores
            .iter()
            .find(|s| s.method == self.reference)
            .map(|s| s.climb_avg)
            .ok_or_else(|| {
                Error::contract(format!(
                    "reference {} missing at scale {}",
                    self.reference, self.label
                ))
            })
    }

    fn ranks(&self) -> Vec<(MethodTag, usize)> {
        let mut order: Vec<(f64, MethodTag)> =
            self.scores.iter().map(|s| (s.climb_avg, s.method)).collect();
        order.sort_by(|a, b| order_desc(*a, *b));
        order.into_iter().enumerate().map(|(i, (_, m))| (m, i + 1)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossScaleRow {
    pub method: MethodTag,
    pub small: Option<f64>,
    pub large: Option<f64>,
    pub delta_small: Option<f64>,
    pub delta_large: Option<f64>,
    pub rank_small: Option<usize>,
    pub rank_large: Option<usize>,
}

impl CrossScaleRow {
    /// "a->b", with "-" where the method is absent.
    pub fn movement(&self) -> String {
        let r = |x: Option<usize>| x.map_or("-".to_string(), |v| v.to_string());
        format!("{}->{}", r(self.rank_small), r(self.rank_large))
    }
}

/// Counts of methods whose sign against the reference survives the change
/// of scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignSummary {
    pub improvers: usize,
    pub improvers_kept: usize,
    pub failures: usize,
    pub failures_kept: usize,
}

impl fmt::Display for SignSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{} improvers positive, {}/{} failures negative",
            self.improvers_kept, self.improvers, self.failures_kept, self.failures
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossScaleTable {
    pub small_label: String,
    pub large_label: String,
    pub rows: Vec<CrossScaleRow>,
    pub signs: SignSummary,
}

/// Compare two scales. Ranks are positions within each scale's full list;
/// methods present at only one scale keep a row with the other side empty.
/// Rows follow the larger scale's ranking, then the remaining methods by
/// their small-scale rank.
pub fn cross_scale_table(small: ScaleScores<'_>, large: ScaleScores<'_>) -> Result<CrossScaleTable> {
    check_unique(small.scores)?;
    check_unique(large.scores)?;
    let (ref_small, ref_large) = (small.reference_value()?, large.reference_value()?);
    let (ranks_small, ranks_large) = (small.ranks(), large.ranks());
    let find = |scores: &[MethodScore], m| scores.iter().find(|s| s.method == m).map(|s| s.climb_avg);
    let rank_of = |ranks: &[(MethodTag, usize)], m| ranks.iter().find(|r| r.0 == m).map(|r| r.1);

    let methods: BTreeSet<MethodTag> = small
        .scores
        .iter()
        .chain(large.scores)
        .map(|s| s.method)
        .collect();
    let mut rows: Vec<CrossScaleRow> = methods
        .into_iter()
        .map(|m| {
            let (s, l) = (find(small.scores, m), find(large.scores, m));
            CrossScaleRow {
                method: m,
                small: s,
                large: l,
                delta_small: s.map(|v| v - ref_small),
                delta_large: l.map(|v| v - ref_large),
                rank_small: rank_of(&ranks_small, m),
                rank_large: rank_of(&ranks_large, m),
            }
        })
        .collect();
    rows.sort_by_key(|r| (r.rank_large.unwrap_or(usize::MAX), r.rank_small.unwrap_or(usize::MAX)));

    let mut signs = SignSummary {
        improvers: 0,
        improvers_kept: 0,
        failures: 0,
        failures_kept: 0,
    };
    for r in &rows {
        let (Some(ds), Some(dl)) = (r.delta_small, r.delta_large) else {
            continue;
        };
        if ds > 0.0 {
            signs.improvers += 1;
            signs.improvers_kept += usize::from(dl > 0.0);
        } else if ds < 0.0 {
            signs.failures += 1;
            signs.failures_kept += usize::from(dl < 0.0);
        }
    }
    Ok(CrossScaleTable {
        small_label: small.label.to_string(),
        large_label: large.label.to_string(),
        rows,
        signs,
    })
}

impl CrossScaleTable {
    pub fn row(&self, method: MethodTag) -> Option<&CrossScaleRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_table(&self) -> Table {
        let delta_header = format!("Δ {}", self.large_label);
        let mut t = Table::new(
            &["Method", &self.small_label, &self.large_label, &delta_header, "Rank"],
            1,
        );
        let value = |v: Option<f64>| v.map_or("absent".to_string(), |x| format!("{x:.4}"));
        for r in &self.rows {
            t.push(vec![
                r.method.to_string(),
                value(r.small),
                value(r.large),
                r.delta_large.map_or("absent".to_string(), |d| signed(d, 4)),
                r.movement(),
            ]);
        }
        t
    }
}
