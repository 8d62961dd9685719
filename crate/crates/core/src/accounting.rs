//! Operation-level parameter and per-step FLOPs accounting.
//!
//! Parameter counts are closed-form integers that mirror exactly the tensors
//! a [`Decoder`](crate::Decoder) allocates. FLOPs follow the per-layer
//! decomposition into attention-score, attention-projection and FFN terms,
//! multiplied by three for forward, backward and activation recomputation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::methods::{AttnStructure, Mixing, MethodSpec, MethodTag, NormPlacement, ResidualKind};
use crate::model::ModelConfig;
use crate::report::table::{human_count, signed, Table};

/// Multiplier covering forward, backward and activation checkpointing.
pub const STEP_MULTIPLIER: u128 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub params_total: u64,
    /// Keys: `embeddings`, `attn`, `ffn`, `norms`, `extras`.
    pub params_by_component: BTreeMap<String, u64>,
    pub flops_per_step: u128,
    /// Per-layer, per-sequence forward terms: `attn_score`, `attn_proj`, `ffn`.
    /// `attn_proj` and `ffn` are per token.
    pub flops_by_term: BTreeMap<String, u128>,
}

fn attn_params(cfg: &ModelConfig, spec: &MethodSpec) -> u64 {
    let (d, dh, h) = (cfg.d_model as u64, cfg.d_head() as u64, cfg.n_heads as u64);
    let dkv = cfg.d_kv() as u64;
    let out_heads = h - spec.mask_heads(cfg) as u64;
    d * h * dh + 2 * d * dkv + out_heads * dh * d
}

fn ffn_params(cfg: &ModelConfig, spec: &MethodSpec) -> u64 {
    (spec.ffn.matrices() * cfg.d_model * spec.ffn.width(cfg.d_inter)) as u64
}

/// Norm scales: sublayer pre/post norms, final norm, QK norms, the
/// differential-attention group norm and attention-residual key norms.
fn norm_params(cfg: &ModelConfig, spec: &MethodSpec) -> u64 {
    let (l, d, dh) = (cfg.n_layers as u64, cfg.d_model as u64, cfg.d_head() as u64);
    let per_layer_post = match spec.norm {
        NormPlacement::Pre => 0,
        NormPlacement::Sandwich => 2,
        NormPlacement::Hybrid => 1,
    };
    let mut n = l * (2 + per_layer_post) * d + d;
    if spec.qk_norm {
        n += l * 2 * dh;
    }
    if matches!(spec.structure, AttnStructure::Diff) {
        n += l * cfg.n_heads as u64 * dh;
    }
    if matches!(spec.residual, ResidualKind::Attnres { .. }) {
        n += l * 2 * d;
    }
    n
}

/// Method-specific scalars, vectors and gate matrices.
fn extra_params(cfg: &ModelConfig, spec: &MethodSpec) -> u64 {
    let (l, d, h) = (cfg.n_layers as u64, cfg.d_model as u64, cfg.n_heads as u64);
    let mixing = match spec.mixing {
        Mixing::Sigmoid { .. } => l,
        Mixing::Ssmax { .. } => l * h,
        Mixing::Softmax | Mixing::Softpick | Mixing::Cap { .. } => 0,
    };
    let structure = match spec.structure {
        AttnStructure::Diff => l,
        AttnStructure::ValueResidual { .. } => l.saturating_sub(1),
        AttnStructure::Gated => l * d * h,
        AttnStructure::Plain | AttnStructure::Selective { .. } => 0,
    };
    let residual = match spec.residual {
        ResidualKind::Identity => 0,
        ResidualKind::Denseformer => l * (l + 1) / 2,
        ResidualKind::Layerscale { .. } => l * 2 * d,
        ResidualKind::Hyper { .. } => l * 4,
        ResidualKind::Attnres { .. } => l * 2 * d,
    };
    mixing + structure + residual
}

/// Exact parameter count, broken down by component.
pub fn count_params(cfg: &ModelConfig, spec: &MethodSpec) -> CostBreakdown {
    let l = cfg.n_layers as u64;
    let embed = (cfg.vocab * cfg.d_model) as u64;
    let embeddings = if cfg.tied_embeddings { embed } else { 2 * embed };
    let parts = [
        ("embeddings", embeddings),
        ("attn", l * attn_params(cfg, spec)),
        ("ffn", l * ffn_params(cfg, spec)),
        ("norms", norm_params(cfg, spec)),
        ("extras", extra_params(cfg, spec)),
    ];
    CostBreakdown {
        params_total: parts.iter().map(|(_, n)| n).sum(),
        params_by_component: parts.iter().map(|(k, n)| (k.to_string(), *n)).collect(),
        flops_per_step: 0,
        flops_by_term: BTreeMap::new(),
    }
}

/// Per-layer forward terms for one sequence of length `cfg.context`.
fn layer_terms(cfg: &ModelConfig, spec: &MethodSpec) -> [(&'static str, u128); 3] {
    let s = cfg.context as u128;
    let d = cfg.d_model as u128;
    let dkv = cfg.d_kv() as u128;
    let k_width = (spec.ffn.matrices() * spec.ffn.width(cfg.d_inter)) as u128;
    [
        ("attn_score", 2 * s * s * d),
        ("attn_proj", 2 * (2 * d * d + 2 * d * dkv)),
        ("ffn", 2 * k_width * d),
    ]
}

/// Parameter count plus training FLOPs for one optimizer step over
/// `batch_tokens` tokens (sequences of `cfg.context` tokens).
pub fn step_flops(cfg: &ModelConfig, spec: &MethodSpec, batch_tokens: u64) -> CostBreakdown {
    let [(_, score), (_, proj), (_, ffn)] = layer_terms(cfg, spec);
    let s = cfg.context as u128;
    let l = cfg.n_layers as u128;
    // score is quadratic per sequence, so per token it is 2·s·d
    let per_token_layer = score / s + proj + ffn;
    let flops = STEP_MULTIPLIER * l * per_token_layer * batch_tokens as u128;
    CostBreakdown {
        flops_per_step: flops,
        flops_by_term: layer_terms(cfg, spec)
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect(),
        ..count_params(cfg, spec)
    }
}

/// Training FLOPs for a single sequence: Σ_ℓ [score + s·(proj + ffn)] × 3.
pub fn sequence_flops(cfg: &ModelConfig, spec: &MethodSpec) -> u128 {
    step_flops(cfg, spec, cfg.context as u64).flops_per_step
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub method: MethodTag,
    pub category: String,
    pub params: u64,
    pub flops_per_step: u128,
    /// Percent change vs the baseline row, unrounded.
    pub delta_params_pct: f64,
    pub delta_flops_pct: f64,
}

/// Reference ΔP and ΔF (percent, 2 decimals) at the 1.2B configuration,
/// in reporting order.
pub const REFERENCE_DELTAS: [(MethodTag, f64, f64); 20] = [
    (MethodTag::Baseline, 0.00, 0.00),
    (MethodTag::Softpick, 0.00, 0.00),
    (MethodTag::Qknorm, 0.00, 0.00),
    (MethodTag::SelectiveAttn, -2.07, 0.00),
    (MethodTag::SelectiveQknorm, -2.07, 0.00),
    (MethodTag::ValueResidual, 0.00, 0.00),
    (MethodTag::DiffAttn, 0.01, 0.00),
    (MethodTag::SigmoidAttn, 0.00, 0.00),
    (MethodTag::Ssmax, 0.00, 0.00),
    (MethodTag::SoftmaxCap, 0.00, 0.00),
    (MethodTag::GatedAttnQknorm, 0.13, 0.13),
    (MethodTag::GegluFfn, 0.00, 0.00),
    (MethodTag::QknormGeglu, 0.00, 0.00),
    (MethodTag::ReluSquared, 0.00, 0.00),
    (MethodTag::SandwichNorm, 0.01, 0.00),
    (MethodTag::HybridNorm, 0.00, 0.00),
    (MethodTag::Denseformer, 0.00, 0.00),
    (MethodTag::Layerscale, 0.00, 0.00),
    (MethodTag::Hyper, 0.00, 0.00),
    (MethodTag::Attnres, 0.02, 0.00),
];

/// Round to two decimals the way the table prints.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub rows: Vec<DeltaRow>,
}

/// Cost of every spec relative to the baseline, in reporting order
/// (the order of [`MethodTag::ALL`]) regardless of input order.
pub fn delta_table(specs: &[MethodSpec], cfg: &ModelConfig, batch_tokens: u64) -> DeltaTable {
    let base = step_flops(cfg, &MethodSpec::baseline(), batch_tokens);
    let pct = |x: f64, b: f64| 100.0 * (x - b) / b;
    let mut ordered: Vec<&MethodSpec> = specs.iter().collect();
    ordered.sort_by_key(|s| s.tag);
    let rows = ordered
        .into_iter()
        .map(|spec| {
            let c = step_flops(cfg, spec, batch_tokens);
            DeltaRow {
                method: spec.tag,
                category: spec.tag.category().as_str().to_string(),
                params: c.params_total,
                flops_per_step: c.flops_per_step,
                delta_params_pct: pct(c.params_total as f64, base.params_total as f64),
                delta_flops_pct: pct(c.flops_per_step as f64, base.flops_per_step as f64),
            }
        })
        .collect();
    DeltaTable { rows }
}

impl DeltaTable {
    pub fn row(&self, tag: MethodTag) -> Option<&DeltaRow> {
        self.rows.iter().find(|r| r.method == tag)
    }

    /// Columns: Method, Category, Params, ΔP, ΔF.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["Method", "Category", "Params", "ΔP", "ΔF"], 2);
        for r in &self.rows {
            t.push(vec![
                r.method.to_string(),
                r.category.clone(),
                human_count(r.params),
                format!("{}%", signed(r.delta_params_pct, 2)),
                format!("{}%", signed(r.delta_flops_pct, 2)),
            ]);
        }
        t
    }

    /// Full-precision machine-readable form.
    pub fn to_raw_table(&self) -> Table {
        let mut t = Table::new(&["method", "category", "params", "delta_p_pct", "delta_f_pct"], 2);
        for r in &self.rows {
            t.push(vec![
                r.method.to_string(),
                r.category.clone(),
                r.params.to_string(),
                r.delta_params_pct.to_string(),
                r.delta_flops_pct.to_string(),
            ]);
        }
        t
    }

    /// Rows whose rounded deltas differ from [`REFERENCE_DELTAS`] by more
    /// than `tol` percentage points, as (method, derived ΔP, ref ΔP, derived ΔF, ref ΔF).
    pub fn discrepancies(&self, tol: f64) -> Vec<(MethodTag, f64, f64, f64, f64)> {
        REFERENCE_DELTAS
            .iter()
            .filter_map(|&(tag, p, f)| {
                let r = self.row(tag)?;
                let (dp, df) = (round2(r.delta_params_pct), round2(r.delta_flops_pct));
                ((dp - p).abs() > tol + 1e-9 || (df - f).abs() > tol + 1e-9)
                    .then_some((tag, dp, p, df, f))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_components_sum() {
        let c = count_params(&ModelConfig::scale_1_2b(), &MethodSpec::baseline());
        assert_eq!(c.params_by_component.values().sum::<u64>(), c.params_total);
        assert_eq!(c.params_by_component["extras"], 0);
    }

    #[test]
    fn flops_are_linear_in_tokens() {
        let cfg = ModelConfig::toy();
        let spec = MethodSpec::baseline();
        let one = step_flops(&cfg, &spec, 32).flops_per_step;
        assert_eq!(step_flops(&cfg, &spec, 96).flops_per_step, 3 * one);
    }
}
