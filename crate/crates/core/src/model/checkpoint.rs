//! Flat named-parameter archive: `manifest.json` plus little-endian `params.bin`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::methods::MethodSpec;
use crate::scalar::Scalar;
use crate::tensor::InitSpec;

use super::{Decoder, ModelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: InitSpec,
    /// Index of the first element in `params.bin`.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config: ModelConfig,
    pub method: MethodSpec,
    pub params: Vec<ManifestEntry>,
}

const MANIFEST: &str = "manifest.json";
const PARAMS: &str = "params.bin";

pub fn save<T: Scalar>(model: &Decoder<T>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut params = Vec::new();
    let mut bytes = Vec::with_capacity(model.num_params() * 8);
    let mut offset = 0;
    for p in model.params().iter() {
        params.push(ManifestEntry {
            name: p.name.clone(),
            shape: p.tensor.shape().to_vec(),
            init: p.init.clone(),
            offset,
        });
        for v in p.tensor.value().iter() {
            bytes.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        offset += p.tensor.numel();
    }
    let manifest = Manifest {
        seed: model.params().seed(),
        config: model.config().clone(),
        method: model.method().clone(),
        params,
    };
    let path = dir.join(MANIFEST);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    let path = dir.join(PARAMS);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

pub fn load<T: Scalar>(dir: &Path) -> Result<Decoder<T>> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.to_string()))?;
    let model = Decoder::new(&manifest.config, &manifest.method, manifest.seed)?;
    let path = dir.join(PARAMS);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::parse(&path, "length is not a multiple of 8"));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    if manifest.params.len() != model.params().len() {
        return Err(Error::parse(&path, "parameter count differs from the model"));
    }
    for (entry, p) in manifest.params.iter().zip(model.params().iter()) {
        if entry.name != p.name || entry.shape != p.tensor.shape() {
            return Err(Error::parse(
                &path,
                format!("entry `{}` does not match model parameter `{}`", entry.name, p.name),
            ));
        }
        let n = p.tensor.numel();
        let slice = values
            .get(entry.offset..entry.offset + n)
            .ok_or_else(|| Error::parse(&path, format!("`{}` runs past the end", entry.name)))?;
        p.tensor.set_value(slice.iter().map(|&v| T::of(v)).collect());
    }
    Ok(model)
}
