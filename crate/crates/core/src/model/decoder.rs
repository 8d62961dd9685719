use crate::error::{Error, Result};
use crate::methods::residual;
use crate::methods::{MethodSpec, NormPlacement, ResidualKind};
use crate::scalar::Scalar;
use crate::tensor::{InitSpec, ParamStore, Tensor};

use super::attention::{AttnContext, AttnTrace, Attention};
use super::ffn::FeedForward;
use super::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sublayer {
    Attn,
    Ffn,
}

impl Sublayer {
    fn name(self) -> &'static str {
        match self {
            Sublayer::Attn => "attn",
            Sublayer::Ffn => "ffn",
        }
    }
}

/// Norms and residual parameters around one sublayer.
#[derive(Debug, Clone)]
struct Wrapper<T: Scalar> {
    pre_norm: Tensor<T>,
    post_norm: Option<Tensor<T>>,
    gamma: Option<Tensor<T>>,
    hyper: Option<(Tensor<T>, Tensor<T>)>,
    attnres: Option<(Tensor<T>, Tensor<T>)>,
}

impl<T: Scalar> Wrapper<T> {
    fn new(
        store: &mut ParamStore<T>,
        cfg: &ModelConfig,
        spec: &MethodSpec,
        layer: usize,
        which: Sublayer,
    ) -> Result<Self> {
        let d = cfg.d_model;
        let p = |s: &str| format!("layers.{layer}.{}_{s}", which.name());
        let ones = InitSpec::constant(1.0);
        let pre_norm = store.add(&p("norm"), &[d], ones.clone())?;
        let post_norm = match (spec.norm, which) {
            (NormPlacement::Sandwich, _) | (NormPlacement::Hybrid, Sublayer::Ffn) => {
                Some(store.add(&p("post_norm"), &[d], ones.clone())?)
            }
            _ => None,
        };
        let (mut gamma, mut hyper, mut attnres) = (None, None, None);
        match spec.residual {
            ResidualKind::Layerscale { gamma_init } => {
                gamma = Some(store.add(&p("gamma"), &[d], InitSpec::constant(gamma_init))?);
            }
            ResidualKind::Hyper {
                alpha_init,
                beta_logit_init,
            } => {
                hyper = Some((
                    store.add(&p("hyper_alpha"), &[1], InitSpec::constant(alpha_init))?,
                    store.add(&p("hyper_beta_logit"), &[1], InitSpec::constant(beta_logit_init))?,
                ));
            }
            ResidualKind::Attnres { query_std } => {
                attnres = Some((
                    store.add(&p("res_query"), &[d], InitSpec::normal(query_std))?,
                    store.add(&p("res_key_norm"), &[d], ones)?,
                ));
            }
            ResidualKind::Identity | ResidualKind::Denseformer => {}
        }
        Ok(Wrapper {
            pre_norm,
            post_norm,
            gamma,
            hyper,
            attnres,
        })
    }
}

#[derive(Debug, Clone)]
struct Block<T: Scalar> {
    attn: Attention<T>,
    ffn: FeedForward<T>,
    attn_wrap: Wrapper<T>,
    ffn_wrap: Wrapper<T>,
    dwa: Option<Tensor<T>>,
}

/// Per-pass residual bookkeeping.
struct Stream<T: Scalar> {
    /// Embedding followed by every sublayer branch output so far.
    branches: Vec<Tensor<T>>,
    slow: Option<Tensor<T>>,
}

/// Forward-pass options.
#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardOptions {
    /// Retain per-head logits/weights and per-layer hidden states.
    pub diagnostics: bool,
}

#[derive(Debug)]
pub struct ForwardOutput<T: Scalar> {
    /// (batch·seq, vocab)
    pub logits: Tensor<T>,
    /// Output of every block; filled when diagnostics are on.
    pub hidden: Vec<Tensor<T>>,
    pub traces: Vec<AttnTrace<T>>,
    /// Some softmax row had no visible key.
    pub empty_rows: bool,
}

/// Decoder-only Transformer with tied (or untied) embeddings.
#[derive(Debug, Clone)]
pub struct Decoder<T: Scalar> {
    cfg: ModelConfig,
    spec: MethodSpec,
    store: ParamStore<T>,
    embed: Tensor<T>,
    lm_head: Option<Tensor<T>>,
    final_norm: Tensor<T>,
    blocks: Vec<Block<T>>,
}

impl<T: Scalar> Decoder<T> {
    pub fn new(cfg: &ModelConfig, spec: &MethodSpec, seed: u64) -> Result<Self> {
        cfg.validate()?;
        spec.validate(cfg)?;
        let mut store = ParamStore::new(seed);
        let lin = InitSpec::normal(cfg.init_std);
        let embed = store.add("embed", &[cfg.vocab, cfg.d_model], lin.clone())?;
        let mut blocks = Vec::with_capacity(cfg.n_layers);
        for layer in 0..cfg.n_layers {
            let dwa = match spec.residual {
                ResidualKind::Denseformer => {
                    Some(store.add(&format!("layers.{layer}.dwa"), &[layer + 1], InitSpec::Identity)?)
                }
                _ => None,
            };
            blocks.push(Block {
                attn_wrap: Wrapper::new(&mut store, cfg, spec, layer, Sublayer::Attn)?,
                attn: Attention::new(&mut store, cfg, spec, layer)?,
                ffn_wrap: Wrapper::new(&mut store, cfg, spec, layer, Sublayer::Ffn)?,
                ffn: FeedForward::new(&mut store, cfg, spec.ffn, layer)?,
                dwa,
            });
        }
        let final_norm = store.add("final_norm", &[cfg.d_model], InitSpec::constant(1.0))?;
        let lm_head = if cfg.tied_embeddings {
            None
        } else {
            Some(store.add("lm_head", &[cfg.vocab, cfg.d_model], lin)?)
        };
        Ok(Decoder {
            cfg: cfg.clone(),
            spec: spec.clone(),
            store,
            embed,
            lm_head,
            final_norm,
            blocks,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn method(&self) -> &MethodSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn num_params(&self) -> usize {
        self.store.numel()
    }

    pub fn embedding(&self) -> &Tensor<T> {
        &self.embed
    }

    /// Logits for `batch` sequences laid out back to back in `tokens`.
    pub fn forward(
        &self,
        tokens: &[usize],
        batch: usize,
        opts: ForwardOptions,
    ) -> Result<ForwardOutput<T>> {
        if batch == 0 || tokens.is_empty() || tokens.len() % batch != 0 {
            return Err(Error::contract(format!(
                "{} tokens cannot be split into {batch} sequences",
                tokens.len()
            )));
        }
        let seq = tokens.len() / batch;
        if seq > self.cfg.context {
            return Err(Error::contract(format!(
                "sequence length {seq} exceeds context {}",
                self.cfg.context
            )));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.cfg.vocab) {
            return Err(Error::contract(format!(
                "token id {bad} outside vocabulary of {}",
                self.cfg.vocab
            )));
        }
        let eps = T::of(self.cfg.norm_eps);
        let mut ctx = AttnContext {
            traces: opts.diagnostics.then(Vec::new),
            ..Default::default()
        };
        let mut x = Tensor::embedding(&self.embed, tokens);
        let mut stream = Stream {
            branches: vec![x.clone()],
            slow: None,
        };
        let mut block_outputs = Vec::new();
        let mut hidden = Vec::new();
        for block in &self.blocks {
            let h = self.sublayer(&x, &block.attn_wrap, Sublayer::Attn, &mut stream, eps, |u| {
                block.attn.forward(u, batch, seq, &mut ctx)
            })?;
            let mut y = self.sublayer(&h, &block.ffn_wrap, Sublayer::Ffn, &mut stream, eps, |u| {
                block.ffn.forward(u)
            })?;
            if let Some(alpha) = &block.dwa {
                block_outputs.push(y);
                y = residual::depth_weighted_average(&block_outputs, alpha);
            }
            if opts.diagnostics {
                hidden.push(y.clone());
            }
            x = y;
        }
        let normed = x.rmsnorm(Some(&self.final_norm), eps);
        let logits = normed.matmul_t(self.lm_head.as_ref().unwrap_or(&self.embed));
        Ok(ForwardOutput {
            logits,
            hidden,
            traces: ctx.traces.unwrap_or_default(),
            empty_rows: ctx.empty_rows,
        })
    }

    fn sublayer(
        &self,
        x: &Tensor<T>,
        wrap: &Wrapper<T>,
        which: Sublayer,
        stream: &mut Stream<T>,
        eps: T,
        f: impl FnOnce(&Tensor<T>) -> Tensor<T>,
    ) -> Result<Tensor<T>> {
        let mut branch = f(&x.rmsnorm(Some(&wrap.pre_norm), eps));
        if self.spec.norm == NormPlacement::Sandwich {
            branch = branch.rmsnorm(wrap.post_norm.as_ref(), eps);
        }
        let out = if let Some(gamma) = &wrap.gamma {
            residual::layerscale(x, &branch, gamma)
        } else if let Some((alpha, beta_logit)) = &wrap.hyper {
            let (out, slow) = residual::hyper(x, &branch, stream.slow.as_ref(), alpha, beta_logit);
            stream.slow = Some(slow);
            out
        } else if let Some((query, key_norm)) = &wrap.attnres {
            let mut candidates = stream.branches.clone();
            candidates.push(branch.clone());
            let out = residual::attn_residual(&candidates, query, Some(key_norm), eps)?;
            stream.branches.push(branch);
            out
        } else {
            x.add(&branch)
        };
        Ok(match (self.spec.norm, which) {
            (NormPlacement::Hybrid, Sublayer::Ffn) => out.rmsnorm(wrap.post_norm.as_ref(), eps),
            _ => out,
        })
    }

    /// Mean next-token cross-entropy: `inputs` and `targets` are aligned token for token.
    pub fn loss(&self, inputs: &[usize], targets: &[usize], batch: usize) -> Result<Tensor<T>> {
        if inputs.len() != targets.len() {
            return Err(Error::contract("inputs and targets differ in length"));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= self.cfg.vocab) {
            return Err(Error::contract(format!("target id {bad} outside vocabulary")));
        }
        let out = self.forward(inputs, batch, ForwardOptions::default())?;
        Ok(out.logits.cross_entropy(targets))
    }

    /// Attention layer of block `layer`, for tests and diagnostics.
    pub fn attention(&self, layer: usize) -> &Attention<T> {
        &self.blocks[layer].attn
    }
}
