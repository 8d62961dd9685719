use crate::error::Result;
use crate::methods::mixing::{self, MixingParams};
use crate::methods::structure;
use crate::methods::{diff_lambda_init, AttnStructure, Mixing, MethodSpec};
use crate::scalar::Scalar;
use crate::tensor::{AttnMask, InitSpec, ParamStore, Tensor};

use super::ModelConfig;

/// Logits and weights of one head, kept when diagnostics are on.
#[derive(Debug, Clone)]
pub struct AttnTrace<T: Scalar> {
    pub layer: usize,
    pub batch: usize,
    pub head: usize,
    pub len: usize,
    pub logits: Vec<T>,
    pub weights: Vec<T>,
}

/// State threaded through the attention layers of one forward pass.
#[derive(Debug, Default)]
pub struct AttnContext<T: Scalar> {
    /// First layer's values, for the value-residual variant.
    pub first_values: Option<Tensor<T>>,
    pub traces: Option<Vec<AttnTrace<T>>>,
    pub empty_rows: bool,
}

/// Grouped-query causal self-attention with every attention-side variant.
#[derive(Debug, Clone)]
pub struct Attention<T: Scalar> {
    layer: usize,
    spec: MethodSpec,
    cfg: ModelConfig,
    mask_per_group: usize,
    wq: Tensor<T>,
    wk: Tensor<T>,
    wv: Tensor<T>,
    wo: Tensor<T>,
    q_norm: Option<Tensor<T>>,
    k_norm: Option<Tensor<T>>,
    sigmoid_bias: Option<Tensor<T>>,
    ssmax_logits: Option<Tensor<T>>,
    diff_lambda: Option<Tensor<T>>,
    diff_norm: Option<Tensor<T>>,
    value_lambda: Option<Tensor<T>>,
    gate: Option<Tensor<T>>,
}

impl<T: Scalar> Attention<T> {
    pub fn new(
        store: &mut ParamStore<T>,
        cfg: &ModelConfig,
        spec: &MethodSpec,
        layer: usize,
    ) -> Result<Self> {
        let (d, dh, h) = (cfg.d_model, cfg.d_head(), cfg.n_heads);
        let p = |s: &str| format!("layers.{layer}.attn.{s}");
        let lin = InitSpec::normal(cfg.init_std);
        let mask_heads = spec.mask_heads(cfg);
        let wq = store.add(&p("wq"), &[d, h * dh], lin.clone())?;
        let wk = store.add(&p("wk"), &[d, cfg.d_kv()], lin.clone())?;
        let wv = store.add(&p("wv"), &[d, cfg.d_kv()], lin.clone())?;
        let wo = store.add(&p("wo"), &[(h - mask_heads) * dh, d], lin.clone())?;
        let (q_norm, k_norm) = if spec.qk_norm {
            (
                Some(store.add(&p("q_norm"), &[dh], InitSpec::constant(1.0))?),
                Some(store.add(&p("k_norm"), &[dh], InitSpec::constant(1.0))?),
            )
        } else {
            (None, None)
        };
        let sigmoid_bias = match spec.mixing {
            Mixing::Sigmoid { bias_init } => {
                Some(store.add(&p("sigmoid_bias"), &[1], InitSpec::constant(bias_init))?)
            }
            _ => None,
        };
        let ssmax_logits = match spec.mixing {
            Mixing::Ssmax { s_logit_init } => {
                Some(store.add(&p("ssmax_logit"), &[h], InitSpec::constant(s_logit_init))?)
            }
            _ => None,
        };
        let (mut diff_lambda, mut diff_norm, mut value_lambda, mut gate) = (None, None, None, None);
        match spec.structure {
            AttnStructure::Diff => {
                let l0 = diff_lambda_init(layer);
                diff_lambda = Some(store.add(&p("diff_lambda"), &[1], InitSpec::constant(l0))?);
                diff_norm = Some(store.add(&p("diff_norm"), &[h * dh], InitSpec::constant(1.0))?);
            }
            AttnStructure::ValueResidual { lambda_init } if layer > 0 => {
                value_lambda =
                    Some(store.add(&p("value_lambda"), &[1], InitSpec::constant(lambda_init))?);
            }
            AttnStructure::Gated => {
                gate = Some(store.add(&p("gate"), &[d, h], lin)?);
            }
            _ => {}
        }
        Ok(Attention {
            layer,
            spec: spec.clone(),
            cfg: cfg.clone(),
            mask_per_group: mask_heads / cfg.n_kv_heads,
            wq,
            wk,
            wv,
            wo,
            q_norm,
            k_norm,
            sigmoid_bias,
            ssmax_logits,
            diff_lambda,
            diff_norm,
            value_lambda,
            gate,
        })
    }

    pub fn output_projection(&self) -> &Tensor<T> {
        &self.wo
    }

    pub fn gate_weights(&self) -> Option<&Tensor<T>> {
        self.gate.as_ref()
    }

    fn head_params(&self, head: usize) -> MixingParams<T> {
        let n = self.cfg.n_heads;
        MixingParams {
            bias: self.sigmoid_bias.clone(),
            s_logit: self
                .ssmax_logits
                .as_ref()
                .map(|s| s.reshape(&[1, n]).slice_cols(head, 1).reshape(&[1])),
        }
    }

    /// `x` is the (normalised) sublayer input of shape (batch·seq, d_model).
    pub fn forward(
        &self,
        x: &Tensor<T>,
        batch: usize,
        seq: usize,
        ctx: &mut AttnContext<T>,
    ) -> Tensor<T> {
        let cfg = &self.cfg;
        let (dh, eps) = (cfg.d_head(), T::of(cfg.norm_eps));
        let positions: Vec<usize> = (0..batch).flat_map(|_| 0..seq).collect();

        let mut q = x.matmul(&self.wq);
        let mut k = x.matmul(&self.wk);
        let mut v = x.matmul(&self.wv);
        if let (Some(qn), Some(kn)) = (&self.q_norm, &self.k_norm) {
            q = q.rmsnorm_grouped(Some(qn), eps, dh);
            k = k.rmsnorm_grouped(Some(kn), eps, dh);
        }
        q = q.rope(&positions, dh, cfg.rope_base);
        k = k.rope(&positions, dh, cfg.rope_base);

        if self.layer == 0 {
            ctx.first_values = Some(v.clone());
        } else if let (Some(lambda), Some(first)) = (&self.value_lambda, &ctx.first_values) {
            v = structure::value_residual(&v, first, lambda);
        }

        let gates = self.gate.as_ref().map(|g| x.matmul(g).sigmoid());
        let mask = AttnMask::causal(seq);
        let group = cfg.group_size();
        let attending = group - self.mask_per_group;

        let mut rows = Vec::with_capacity(batch);
        for b in 0..batch {
            let (qb, kb, vb) = (
                q.slice_rows(b * seq, seq),
                k.slice_rows(b * seq, seq),
                v.slice_rows(b * seq, seq),
            );
            let gate_b = gates.as_ref().map(|g| g.slice_rows(b * seq, seq));
            let mut heads = Vec::with_capacity(cfg.n_heads);
            for g in 0..cfg.n_kv_heads {
                let kg = kb.slice_cols(g * dh, dh);
                let vg = vb.slice_cols(g * dh, dh);
                let head_of = |i: usize| g * group + i;

                let subtract = (self.mask_per_group > 0).then(|| {
                    let masking: Vec<Tensor<T>> = (attending..group)
                        .map(|i| {
                            let h = head_of(i);
                            let raw = qb.slice_cols(h * dh, dh).matmul_t(&kg);
                            mixing::logits(self.spec.mixing, &raw, dh, &mask, &self.head_params(h))
                        })
                        .collect();
                    structure::selective_mask(&masking)
                });

                for i in 0..attending {
                    let h = head_of(i);
                    let qh = qb.slice_cols(h * dh, dh);
                    let (logits, weights) = if let Some(lambda) = &self.diff_lambda {
                        let half = dh / 2;
                        let score = |off: usize| {
                            let raw = qh.slice_cols(off, half).matmul_t(&kg.slice_cols(off, half));
                            mixing::logits(Mixing::Softmax, &raw, half, &mask, &Default::default())
                        };
                        let (z1, z2) = (score(0), score(half));
                        let (w1, e1) = z1.softmax_rows_flagged(Some(&mask));
                        let (w2, e2) = z2.softmax_rows_flagged(Some(&mask));
                        ctx.empty_rows |= e1 || e2;
                        (z1, structure::diff_weights(&w1, &w2, lambda))
                    } else {
                        let raw = qh.matmul_t(&kg);
                        let mut z =
                            mixing::logits(self.spec.mixing, &raw, dh, &mask, &self.head_params(h));
                        if let Some(s) = &subtract {
                            z = z.sub(s);
                        }
                        let (w, empty) = mixing::weights(self.spec.mixing, &z, &mask, seq);
                        ctx.empty_rows |= empty;
                        (z, w)
                    };
                    let mut out = weights.matmul(&vg);
                    let gate_h = gate_b
                        .as_ref()
                        .map(|gb| gb.slice_cols(h, 1).reshape(&[seq]));
                    if let Some(gh) = &gate_h {
                        out = structure::gated_output(&out, gh);
                    }
                    if let Some(traces) = ctx.traces.as_mut() {
                        let mut w = weights.to_vec();
                        if let Some(gh) = &gate_h {
                            for (row, &gv) in w.chunks_mut(seq).zip(gh.value().iter()) {
                                row.iter_mut().for_each(|x| *x *= gv);
                            }
                        }
                        traces.push(AttnTrace {
                            layer: self.layer,
                            batch: b,
                            head: h,
                            len: seq,
                            logits: logits.to_vec(),
                            weights: w,
                        });
                    }
                    heads.push(out);
                }
            }
            rows.push(Tensor::concat_cols(&heads));
        }
        let mut mixed = Tensor::concat_rows(&rows);
        if let Some(scale) = &self.diff_norm {
            mixed = mixed.layernorm_grouped(None, eps, dh).mul_row(scale);
        }
        mixed.matmul(&self.wo)
    }
}
