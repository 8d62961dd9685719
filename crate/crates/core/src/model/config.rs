use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of a decoder-only Transformer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_kv_heads: usize,
    pub d_inter: usize,
    pub context: usize,
    pub vocab: usize,
    #[serde(default = "default_rope_base")]
    pub rope_base: f64,
    #[serde(default = "default_true")]
    pub tied_embeddings: bool,
    #[serde(default = "default_norm_eps")]
    pub norm_eps: f64,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

fn default_rope_base() -> f64 {
    10_000.0
}

fn default_true() -> bool {
    true
}

fn default_norm_eps() -> f64 {
    1e-5
}

fn default_init_std() -> f64 {
    0.02
}

impl ModelConfig {
    /// Two-layer model used throughout the tests; FFN ratio matches 5632/2048.
    pub fn toy() -> Self {
        ModelConfig {
            n_layers: 2,
            d_model: 64,
            n_heads: 4,
            n_kv_heads: 2,
            d_inter: 176,
            context: 32,
            vocab: 257,
            rope_base: default_rope_base(),
            tied_embeddings: true,
            norm_eps: default_norm_eps(),
            init_std: default_init_std(),
        }
    }

    /// The 1.2B reference configuration.
    pub fn scale_1_2b() -> Self {
        ModelConfig {
            n_layers: 24,
            d_model: 2048,
            n_heads: 32,
            n_kv_heads: 8,
            d_inter: 5632,
            context: 1024,
            vocab: 65_664,
            ..Self::toy()
        }
    }

    /// The 3B configuration: deeper and wider, heads and FFN ratio kept.
    pub fn scale_3b() -> Self {
        ModelConfig {
            n_layers: 28,
            d_model: 3072,
            d_inter: 8448,
            ..Self::scale_1_2b()
        }
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Width of the shared key (or value) projection.
    pub fn d_kv(&self) -> usize {
        self.n_kv_heads * self.d_head()
    }

    /// Query heads per key/value head.
    pub fn group_size(&self) -> usize {
        self.n_heads / self.n_kv_heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_layers", self.n_layers),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_kv_heads", self.n_kv_heads),
            ("d_inter", self.d_inter),
            ("context", self.context),
            ("vocab", self.vocab),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{name} must be positive")));
        }
        if self.n_heads % self.n_kv_heads != 0 {
            return Err(Error::config(format!(
                "n_heads ({}) must be divisible by n_kv_heads ({})",
                self.n_heads, self.n_kv_heads
            )));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::config(format!(
                "d_model ({}) must be a multiple of n_heads ({})",
                self.d_model, self.n_heads
            )));
        }
        if self.d_head() % 2 != 0 {
            return Err(Error::config(format!(
                "head dimension {} must be even for rotary embeddings",
                self.d_head()
            )));
        }
        if !(self.rope_base > 1.0) || !(self.norm_eps > 0.0) || !(self.init_std > 0.0) {
            return Err(Error::config(
                "rope_base must exceed 1, norm_eps and init_std must be positive",
            ));
        }
        Ok(())
    }
}
