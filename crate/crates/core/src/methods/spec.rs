use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// The twenty configurations compared, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodTag {
    Baseline,
    Softpick,
    Qknorm,
    SelectiveAttn,
    SelectiveQknorm,
    ValueResidual,
    DiffAttn,
    SigmoidAttn,
    Ssmax,
    SoftmaxCap,
    GatedAttnQknorm,
    GegluFfn,
    QknormGeglu,
    ReluSquared,
    SandwichNorm,
    HybridNorm,
    Denseformer,
    Layerscale,
    Hyper,
    Attnres,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Ref,
    Attention,
    Ffn,
    Norm,
    Residual,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Ref => "ref",
            Category::Attention => "attention",
            Category::Ffn => "ffn",
            Category::Norm => "norm",
            Category::Residual => "residual",
        }
    }
}

/// Whether softmax of (transformed) scores stays the mixing operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftHard {
    Soft,
    Hard,
}

impl MethodTag {
    pub const ALL: [MethodTag; 20] = [
        MethodTag::Baseline,
        MethodTag::Softpick,
        MethodTag::Qknorm,
        MethodTag::SelectiveAttn,
        MethodTag::SelectiveQknorm,
        MethodTag::ValueResidual,
        MethodTag::DiffAttn,
        MethodTag::SigmoidAttn,
        MethodTag::Ssmax,
        MethodTag::SoftmaxCap,
        MethodTag::GatedAttnQknorm,
        MethodTag::GegluFfn,
        MethodTag::QknormGeglu,
        MethodTag::ReluSquared,
        MethodTag::SandwichNorm,
        MethodTag::HybridNorm,
        MethodTag::Denseformer,
        MethodTag::Layerscale,
        MethodTag::Hyper,
        MethodTag::Attnres,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodTag::Baseline => "baseline",
            MethodTag::Softpick => "softpick",
            MethodTag::Qknorm => "qknorm",
            MethodTag::SelectiveAttn => "selective_attn",
            MethodTag::SelectiveQknorm => "selective_qknorm",
            MethodTag::ValueResidual => "value_residual",
            MethodTag::DiffAttn => "diff_attn",
            MethodTag::SigmoidAttn => "sigmoid_attn",
            MethodTag::Ssmax => "ssmax",
            MethodTag::SoftmaxCap => "softmax_cap",
            MethodTag::GatedAttnQknorm => "gated_attn_qknorm",
            MethodTag::GegluFfn => "geglu_ffn",
            MethodTag::QknormGeglu => "qknorm_geglu",
            MethodTag::ReluSquared => "relu_squared",
            MethodTag::SandwichNorm => "sandwich_norm",
            MethodTag::HybridNorm => "hybrid_norm",
            MethodTag::Denseformer => "denseformer",
            MethodTag::Layerscale => "layerscale",
            MethodTag::Hyper => "hyper",
            MethodTag::Attnres => "attnres",
        }
    }

    pub fn category(self) -> Category {
        use MethodTag::*;
        match self {
            Baseline => Category::Ref,
            Softpick | Qknorm | SelectiveAttn | SelectiveQknorm | ValueResidual | DiffAttn
            | SigmoidAttn | Ssmax | SoftmaxCap | GatedAttnQknorm => Category::Attention,
            GegluFfn | QknormGeglu | ReluSquared => Category::Ffn,
            SandwichNorm | HybridNorm => Category::Norm,
            Denseformer | Layerscale | Hyper | Attnres => Category::Residual,
        }
    }

    /// Soft/hard label; defined for attention-category methods only.
    pub fn soft_hard(self) -> Option<SoftHard> {
        use MethodTag::*;
        match self {
            Softpick | SigmoidAttn | DiffAttn => Some(SoftHard::Hard),
            _ if self.category() == Category::Attention => Some(SoftHard::Soft),
            _ => None,
        }
    }
}

impl fmt::Display for MethodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown method tag `{s}`")))
    }
}

/// How attention scores become mixing weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mixing {
    Softmax,
    /// ReLU(softmax − 1/n), n = visible keys in the row.
    Softpick,
    /// sigmoid(z + b)/n with learnable scalar b, n = sequence length.
    Sigmoid { bias_init: f64 },
    /// softmax(s·ln(n)·qkᵀ), s = softplus(s_logit) + 0.5 per head.
    Ssmax { s_logit_init: f64 },
    /// Element-wise clamp of the scaled logits before softmax.
    Cap { limit: f64 },
}

/// Structural change to the attention layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttnStructure {
    Plain,
    /// `mask_heads` masking heads (default: one per KV group) feed a
    /// subtractive mask to the remaining heads of their group.
    Selective { mask_heads: Option<usize> },
    Diff,
    ValueResidual { lambda_init: f64 },
    /// Per-head sigmoid output gate from the sublayer input.
    Gated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FfnKind {
    Swiglu,
    Geglu,
    /// Two-matrix ReLU² with 1.5× intermediate width.
    ReluSquared,
}

impl FfnKind {
    /// Number of d×d_inter matrices.
    pub fn matrices(self) -> usize {
        match self {
            FfnKind::Swiglu | FfnKind::Geglu => 3,
            FfnKind::ReluSquared => 2,
        }
    }

    pub fn width(self, d_inter: usize) -> usize {
        match self {
            FfnKind::Swiglu | FfnKind::Geglu => d_inter,
            // round(1.5·d_inter), exact in integers
            FfnKind::ReluSquared => (3 * d_inter + 1) / 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormPlacement {
    Pre,
    Sandwich,
    /// Pre-norm attention, post-norm FFN.
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResidualKind {
    Identity,
    /// Depth-weighted average of block outputs after every block.
    Denseformer,
    Layerscale { gamma_init: f64 },
    Hyper { alpha_init: f64, beta_logit_init: f64 },
    /// Softmax over earlier sublayer outputs keyed by a per-sublayer pseudo-query.
    Attnres { query_std: f64 },
}

/// A fully resolved modification: one value per interchange point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub tag: MethodTag,
    pub mixing: Mixing,
    pub structure: AttnStructure,
    pub qk_norm: bool,
    pub ffn: FfnKind,
    pub norm: NormPlacement,
    pub residual: ResidualKind,
}

pub const SOFTMAX_CAP: f64 = 50.0;
pub const VALUE_RESIDUAL_LAMBDA: f64 = 0.5;
pub const LAYERSCALE_GAMMA: f64 = 1e-4;
pub const HYPER_BETA_LOGIT: f64 = -2.2;
pub const ATTNRES_QUERY_STD: f64 = 0.02;

/// Initial value of the differential-attention λ at 0-based layer `layer`.
pub fn diff_lambda_init(layer: usize) -> f64 {
    // the schedule is written for 1-based depth: 0.8 − 0.6·exp(−0.3(ℓ−1))
    0.8 - 0.6 * (-0.3 * layer as f64).exp()
}

impl MethodSpec {
    pub fn baseline() -> Self {
        MethodSpec {
            tag: MethodTag::Baseline,
            mixing: Mixing::Softmax,
            structure: AttnStructure::Plain,
            qk_norm: false,
            ffn: FfnKind::Swiglu,
            norm: NormPlacement::Pre,
            residual: ResidualKind::Identity,
        }
    }

    /// The fixed slot assignment for a tag.
    pub fn from_tag(tag: MethodTag) -> Self {
        use MethodTag::*;
        let base = MethodSpec {
            tag,
            ..Self::baseline()
        };
        match tag {
            Baseline => base,
            Softpick => MethodSpec {
                mixing: Mixing::Softpick,
                ..base
            },
            Qknorm => MethodSpec {
                qk_norm: true,
                ..base
            },
            SelectiveAttn => MethodSpec {
                structure: AttnStructure::Selective { mask_heads: None },
                ..base
            },
            SelectiveQknorm => MethodSpec {
                structure: AttnStructure::Selective { mask_heads: None },
                qk_norm: true,
                ..base
            },
            ValueResidual => MethodSpec {
                structure: AttnStructure::ValueResidual {
                    lambda_init: VALUE_RESIDUAL_LAMBDA,
                },
                ..base
            },
            DiffAttn => MethodSpec {
                structure: AttnStructure::Diff,
                ..base
            },
            SigmoidAttn => MethodSpec {
                mixing: Mixing::Sigmoid { bias_init: 0.0 },
                ..base
            },
            Ssmax => MethodSpec {
                mixing: Mixing::Ssmax { s_logit_init: 0.0 },
                ..base
            },
            SoftmaxCap => MethodSpec {
                mixing: Mixing::Cap { limit: SOFTMAX_CAP },
                ..base
            },
            GatedAttnQknorm => MethodSpec {
                structure: AttnStructure::Gated,
                qk_norm: true,
                ..base
            },
            GegluFfn => MethodSpec {
                ffn: FfnKind::Geglu,
                ..base
            },
            QknormGeglu => MethodSpec {
                ffn: FfnKind::Geglu,
                qk_norm: true,
                ..base
            },
            ReluSquared => MethodSpec {
                ffn: FfnKind::ReluSquared,
                ..base
            },
            SandwichNorm => MethodSpec {
                norm: NormPlacement::Sandwich,
                ..base
            },
            HybridNorm => MethodSpec {
                norm: NormPlacement::Hybrid,
                ..base
            },
            Denseformer => MethodSpec {
                residual: ResidualKind::Denseformer,
                ..base
            },
            Layerscale => MethodSpec {
                residual: ResidualKind::Layerscale {
                    gamma_init: LAYERSCALE_GAMMA,
                },
                ..base
            },
            Hyper => MethodSpec {
                residual: ResidualKind::Hyper {
                    alpha_init: 0.0,
                    beta_logit_init: HYPER_BETA_LOGIT,
                },
                ..base
            },
            Attnres => MethodSpec {
                residual: ResidualKind::Attnres {
                    query_std: ATTNRES_QUERY_STD,
                },
                ..base
            },
        }
    }

    pub fn all() -> Vec<MethodSpec> {
        MethodTag::ALL.into_iter().map(Self::from_tag).collect()
    }

    /// Number of masking heads for a selective layer under `cfg`, if any.
    pub fn mask_heads(&self, cfg: &ModelConfig) -> usize {
        match self.structure {
            AttnStructure::Selective { mask_heads } => mask_heads.unwrap_or(cfg.n_kv_heads),
            _ => 0,
        }
    }

    /// Check that the method can be built on `cfg`.
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        if let AttnStructure::Selective { .. } = self.structure {
            let m = self.mask_heads(cfg);
            if m >= cfg.n_heads {
                return Err(Error::config(format!(
                    "selective attention needs fewer masking heads ({m}) than heads ({})",
                    cfg.n_heads
                )));
            }
            if m % cfg.n_kv_heads != 0 {
                return Err(Error::config(format!(
                    "masking heads ({m}) must split evenly over {} KV groups",
                    cfg.n_kv_heads
                )));
            }
            if m / cfg.n_kv_heads >= cfg.group_size() {
                return Err(Error::config(
                    "every KV group needs at least one attention head",
                ));
            }
        }
        if self.structure == AttnStructure::Diff && cfg.d_head() % 2 != 0 {
            return Err(Error::config("differential attention needs an even head dimension"));
        }
        match self.mixing {
            Mixing::Cap { limit } if !(limit > 0.0) => {
                Err(Error::config("softmax cap must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// True when selective attention was requested with no masking heads,
    /// which makes it plain attention.
    pub fn is_degenerate(&self, cfg: &ModelConfig) -> bool {
        matches!(self.structure, AttnStructure::Selective { .. }) && self.mask_heads(cfg) == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_round_trip() {
        for t in MethodTag::ALL {
            assert_eq!(t.as_str().parse::<MethodTag>().unwrap(), t);
            let json = serde_json::to_string(&t).unwrap();
            assert_eq!(json, format!("\"{}\"", t.as_str()));
        }
        assert!(matches!("rezero".parse::<MethodTag>(), Err(Error::Config(_))));
    }

    #[test]
    fn taxonomy_counts() {
        let count = |c| MethodTag::ALL.iter().filter(|t| t.category() == c).count();
        assert_eq!(count(Category::Ref), 1);
        assert_eq!(count(Category::Attention), 10);
        assert_eq!(count(Category::Ffn), 3);
        assert_eq!(count(Category::Norm), 2);
        assert_eq!(count(Category::Residual), 4);
        let hard: Vec<_> = MethodTag::ALL
            .iter()
            .filter(|t| t.soft_hard() == Some(SoftHard::Hard))
            .collect();
        assert_eq!(hard.len(), 3);
    }

    #[test]
    fn combinations_set_both_slots() {
        let s = MethodSpec::from_tag(MethodTag::SelectiveQknorm);
        assert!(s.qk_norm && matches!(s.structure, AttnStructure::Selective { .. }));
        let s = MethodSpec::from_tag(MethodTag::QknormGeglu);
        assert!(s.qk_norm && s.ffn == FfnKind::Geglu);
        let s = MethodSpec::from_tag(MethodTag::GatedAttnQknorm);
        assert!(s.qk_norm && s.structure == AttnStructure::Gated);
        let single = MethodSpec::from_tag(MethodTag::GegluFfn);
        assert!(!single.qk_norm);
    }

    #[test]
    fn diff_lambda_schedule() {
        assert!((diff_lambda_init(0) - 0.2).abs() < 1e-15);
        assert!(diff_lambda_init(23) < 0.8 && diff_lambda_init(23) > 0.79);
    }

    #[test]
    fn relu_squared_width_is_iso_param() {
        let w = FfnKind::ReluSquared.width(5632);
        assert_eq!(w, 8448);
        assert_eq!(2 * w, 3 * 5632);
        assert_eq!(FfnKind::ReluSquared.width(176), 264);
    }

    #[test]
    fn selective_head_counts_validate() {
        let cfg = ModelConfig::toy();
        let mut s = MethodSpec::from_tag(MethodTag::SelectiveAttn);
        s.validate(&cfg).unwrap();
        assert_eq!(s.mask_heads(&cfg), 2);
        s.structure = AttnStructure::Selective { mask_heads: Some(4) };
        assert!(s.validate(&cfg).is_err());
        s.structure = AttnStructure::Selective { mask_heads: Some(0) };
        s.validate(&cfg).unwrap();
        assert!(s.is_degenerate(&cfg));
    }
}
