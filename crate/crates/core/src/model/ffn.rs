use crate::error::Result;
use crate::methods::FfnKind;
use crate::scalar::Scalar;
use crate::tensor::{InitSpec, ParamStore, Tensor};

use super::ModelConfig;

/// Position-wise feed-forward block.
#[derive(Debug, Clone)]
pub struct FeedForward<T: Scalar> {
    kind: FfnKind,
    w_gate: Option<Tensor<T>>,
    w_up: Tensor<T>,
    w_down: Tensor<T>,
}

impl<T: Scalar> FeedForward<T> {
    pub fn new(
        store: &mut ParamStore<T>,
        cfg: &ModelConfig,
        kind: FfnKind,
        layer: usize,
    ) -> Result<Self> {
        let (d, width) = (cfg.d_model, kind.width(cfg.d_inter));
        let lin = InitSpec::normal(cfg.init_std);
        let p = |s: &str| format!("layers.{layer}.ffn.{s}");
        let w_gate = match kind {
            FfnKind::Swiglu | FfnKind::Geglu => Some(store.add(&p("w_gate"), &[d, width], lin.clone())?),
            FfnKind::ReluSquared => None,
        };
        Ok(FeedForward {
            kind,
            w_gate,
            w_up: store.add(&p("w_up"), &[d, width], lin.clone())?,
            w_down: store.add(&p("w_down"), &[width, d], lin)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let up = x.matmul(&self.w_up);
        let hidden = match (self.kind, &self.w_gate) {
            (FfnKind::Swiglu, Some(g)) => x.matmul(g).silu().mul(&up),
            (FfnKind::Geglu, Some(g)) => x.matmul(g).gelu().mul(&up),
            (FfnKind::ReluSquared, _) => up.relu().square(),
            _ => unreachable!("gated FFN built without its gate"),
        };
        hidden.matmul(&self.w_down)
    }
}
