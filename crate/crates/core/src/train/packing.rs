use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingOptions {
    pub seq_len: usize,
    pub separator: usize,
    pub shuffle_seed: u64,
    pub sequences_per_shard: usize,
}

/// Packing metadata, persisted as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingReport {
    pub n_shards: usize,
    pub n_sequences: usize,
    pub seq_len: usize,
    /// Tokens kept in full sequences.
    pub n_tokens: usize,
    pub n_doc_tokens: usize,
    pub n_separators: usize,
    pub n_discarded: usize,
    /// Discarded over the raw stream (document tokens plus separators).
    pub discard_fraction: f64,
    pub shuffle_seed: u64,
    pub tokenizer: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packed {
    pub sequences: Vec<Vec<usize>>,
    pub report: PackingReport,
}

/// Concatenate documents, each followed by the separator, cut into
/// `seq_len` blocks, drop the trailing partial block and shuffle with a
/// fixed seed.
pub fn pack_corpus(docs: &[Vec<usize>], opts: &PackingOptions, tokenizer: &str) -> Result<Packed> {
    if opts.seq_len < 2 {
        return Err(Error::contract(format!("seq_len {} below 2", opts.seq_len)));
    }
    if opts.sequences_per_shard == 0 {
        return Err(Error::contract("sequences_per_shard must be positive"));
    }
    let n_doc_tokens: usize = docs.iter().map(Vec::len).sum();
    let mut stream = Vec::with_capacity(n_doc_tokens + docs.len());
    for d in docs {
        stream.extend_from_slice(d);
        stream.push(opts.separator);
    }
    let mut sequences: Vec<Vec<usize>> = stream
        .chunks_exact(opts.seq_len)
        .map(<[usize]>::to_vec)
        .collect();
    let n_tokens = sequences.len() * opts.seq_len;
    let n_discarded = stream.len() - n_tokens;
    sequences.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.shuffle_seed));
    let report = PackingReport {
        n_shards: sequences.len().div_ceil(opts.sequences_per_shard),
        n_sequences: sequences.len(),
        seq_len: opts.seq_len,
        n_tokens,
        n_doc_tokens,
        n_separators: docs.len(),
        n_discarded,
        discard_fraction: if stream.is_empty() {
            0.0
        } else {
            n_discarded as f64 / stream.len() as f64
        },
        shuffle_seed: opts.shuffle_seed,
        tokenizer: tokenizer.to_string(),
    };
    Ok(Packed { sequences, report })
}
