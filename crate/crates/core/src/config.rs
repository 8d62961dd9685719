//! TOML run configuration with `[model]`, `[method]`, `[recipe]` and `[data]`
//! sections, plus an optional `[monitor]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::methods::{MethodSpec, MethodTag};
use crate::model::ModelConfig;
use crate::train::{CorpusSpec, RecipeConfig, SignatureRules, TrainOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    pub tag: MethodTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub corpus: CorpusSpec,
    /// Held fixed across runs; the run seed only affects initialization.
    pub shuffle_seed: u64,
    pub val_sequences: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        let t = TrainOptions::default();
        DataSection {
            corpus: t.corpus,
            shuffle_seed: t.shuffle_seed,
            val_sequences: t.val_sequences,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorSection {
    pub log_every: usize,
    pub window: usize,
    pub inject_nan_at: Option<usize>,
    pub rules: SignatureRules,
}

impl Default for MonitorSection {
    fn default() -> Self {
        let t = TrainOptions::default();
        MonitorSection {
            log_every: t.log_every,
            window: t.monitor_window,
            inject_nan_at: t.inject_nan_at,
            rules: t.signature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub method: MethodSection,
    #[serde(default)]
    pub recipe: RecipeConfig,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub monitor: MonitorSection,
}

impl RunConfig {
    /// Toy model, toy recipe, default data.
    pub fn toy(tag: MethodTag) -> Self {
        RunConfig {
            model: ModelConfig::toy(),
            method: MethodSection { tag },
            recipe: RecipeConfig::toy(),
            data: DataSection::default(),
            monitor: MonitorSection::default(),
        }
    }

    pub fn from_toml(text: &str, origin: impl AsRef<Path>) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::parse(origin, e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.recipe.validate()?;
        self.spec().validate(&self.model)
    }

    pub fn spec(&self) -> MethodSpec {
        MethodSpec::from_tag(self.method.tag)
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            log_every: self.monitor.log_every,
            inject_nan_at: self.monitor.inject_nan_at,
            val_sequences: self.data.val_sequences,
            corpus: self.data.corpus.clone(),
            shuffle_seed: self.data.shuffle_seed,
            monitor_window: self.monitor.window,
            signature: self.monitor.rules.clone(),
        }
    }
}
