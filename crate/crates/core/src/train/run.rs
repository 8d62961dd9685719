use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::corpus::{synthetic_corpus, CorpusSpec, SEPARATOR};
use super::monitor::{DivergenceMonitor, Signature, SignatureRules};
use super::optim::{clip_grad, global_norm, AdamW};
use super::packing::{pack_corpus, PackingOptions, PackingReport};
use super::recipe::{lr_at_step, RecipeConfig};
use crate::error::{Error, Result};
use crate::methods::{MethodSpec, MethodTag};
use crate::model::{Decoder, ModelConfig};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub log_every: usize,
    /// Replace the gradient with NaN at this step.
    pub inject_nan_at: Option<usize>,
    /// Held-out sequences taken from the end of the packed corpus.
    pub val_sequences: usize,
    pub corpus: CorpusSpec,
    pub shuffle_seed: u64,
    pub monitor_window: usize,
    pub signature: SignatureRules,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            log_every: 1,
            inject_nan_at: None,
            val_sequences: 16,
            corpus: CorpusSpec::default(),
            shuffle_seed: 0,
            monitor_window: 64,
            signature: SignatureRules::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub loss: f64,
    /// Pre-clip global norm.
    pub grad_norm: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: MethodTag,
    pub seed: u64,
    pub config: ModelConfig,
    pub recipe: RecipeConfig,
    pub logs: Vec<StepLog>,
    pub initial_loss: f64,
    pub final_val_loss: Option<f64>,
    pub diverged: bool,
    pub nan_step: Option<usize>,
    pub signature: Option<Signature>,
    pub packing: PackingReport,
}

/// Last line of a metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFooter {
    pub method: MethodTag,
    pub seed: u64,
    pub steps_logged: usize,
    pub initial_loss: f64,
    pub final_val_loss: Option<f64>,
    pub diverged: bool,
    pub nan_step: Option<usize>,
    pub signature: Option<Signature>,
    pub packing: PackingReport,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum MetricsLine {
    Step(StepLog),
    Footer(MetricsFooter),
}

fn split_rows(seqs: &[&Vec<usize>]) -> (Vec<usize>, Vec<usize>) {
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for s in seqs {
        inputs.extend_from_slice(&s[..s.len() - 1]);
        targets.extend_from_slice(&s[1..]);
    }
    (inputs, targets)
}

/// Train one (method, seed) pair on the packed synthetic corpus.
///
/// A non-finite loss or gradient norm stops the run; the record then carries
/// the NaN step and the signature of the gradient norms that led into it.
pub fn train_run<T: Scalar>(
    cfg: &ModelConfig,
    spec: &MethodSpec,
    recipe: &RecipeConfig,
    seed: u64,
    opts: &TrainOptions,
) -> Result<RunRecord> {
    recipe.validate()?;
    if cfg.vocab <= SEPARATOR {
        return Err(Error::config(format!(
            "vocabulary {} cannot hold byte tokens and the separator",
            cfg.vocab
        )));
    }
    if opts.log_every == 0 {
        return Err(Error::config("log_every must be positive"));
    }
    let docs = synthetic_corpus(&opts.corpus);
    let packed = pack_corpus(
        &docs,
        &PackingOptions {
            seq_len: cfg.context + 1,
            separator: SEPARATOR,
            shuffle_seed: opts.shuffle_seed,
            sequences_per_shard: 256,
        },
        "bytes",
    )?;
    let n = packed.sequences.len();
    if n <= opts.val_sequences {
        return Err(Error::config(format!(
            "corpus packs into {n} sequences, not enough beyond {} held out",
            opts.val_sequences
        )));
    }
    let (train, val) = packed.sequences.split_at(n - opts.val_sequences);
    let batch = (recipe.tokens_per_step / cfg.context).max(1);

    let model = Decoder::<T>::new(cfg, spec, seed)?;
    let params = model.params().tensors();
    let mut adam = AdamW::new(&params);
    let mut monitor = DivergenceMonitor::new(opts.monitor_window);
    let mut logs = Vec::new();
    let mut initial_loss = f64::NAN;
    let mut nan_step = None;
    let mut signature = None;

    for step in 1..=recipe.total_steps {
        let rows: Vec<&Vec<usize>> = (0..batch)
            .map(|b| &train[((step - 1) * batch + b) % train.len()])
            .collect();
        let (inputs, targets) = split_rows(&rows);
        model.params().zero_grad();
        let loss = model.loss(&inputs, &targets, batch)?;
        let loss_value = loss.item().as_f64();
        if step == 1 {
            initial_loss = loss_value;
        }
        loss.backward()?;
        let mut grads: Vec<Vec<T>> = params
            .iter()
            .map(|p| p.grad().unwrap_or_else(|| vec![T::zero(); p.numel()]))
            .collect();
        if opts.inject_nan_at == Some(step) {
            grads[0][0] = T::of(f64::NAN);
        }
        let norm = global_norm(&grads);
        if !loss_value.is_finite() || !norm.is_finite() {
            nan_step = Some(step);
            signature = Some(monitor.diverge(step, &opts.signature));
            break;
        }
        monitor.record(step, norm);
        clip_grad(&mut grads, recipe.clip_norm);
        let lr = lr_at_step(step, recipe)?;
        adam.step(&params, &grads, lr, recipe)?;
        if step == 1 || step % opts.log_every == 0 || step == recipe.total_steps {
            logs.push(StepLog {
                step,
                loss: loss_value,
                grad_norm: norm,
                lr,
            });
        }
    }
    model.params().zero_grad();

    let final_val_loss = if nan_step.is_some() {
        None
    } else {
        let rows: Vec<&Vec<usize>> = val.iter().collect();
        let mut total = 0.0;
        for chunk in rows.chunks(batch) {
            let (inputs, targets) = split_rows(chunk);
            let l = model.loss(&inputs, &targets, chunk.len())?.item().as_f64();
            total += l * chunk.len() as f64;
        }
        Some(total / val.len() as f64)
    };

    Ok(RunRecord {
        method: spec.tag,
        seed,
        config: cfg.clone(),
        recipe: recipe.clone(),
        logs,
        initial_loss,
        final_val_loss,
        diverged: nan_step.is_some(),
        nan_step,
        signature,
        packing: packed.report,
    })
}

/// Write step logs as JSON lines followed by a footer line.
pub fn write_metrics(path: impl AsRef<Path>, record: &RunRecord) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let footer = MetricsFooter {
        method: record.method,
        seed: record.seed,
        steps_logged: record.logs.len(),
        initial_loss: record.initial_loss,
        final_val_loss: record.final_val_loss,
        diverged: record.diverged,
        nan_step: record.nan_step,
        signature: record.signature,
        packing: record.packing.clone(),
    };
    let lines = record
        .logs
        .iter()
        .map(|l| MetricsLine::Step(*l))
        .chain(std::iter::once(MetricsLine::Footer(footer)));
    for line in lines {
        let text = serde_json::to_string(&line).map_err(|e| Error::parse(path, e.to_string()))?;
        writeln!(w, "{text}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<(Vec<StepLog>, MetricsFooter)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut steps = Vec::new();
    let mut footer = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if footer.is_some() {
            return Err(Error::parse(path, format!("line {} follows the footer", i + 1)));
        }
        match serde_json::from_str(&line).map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1)))? {
            MetricsLine::Step(s) => steps.push(s),
            MetricsLine::Footer(f) => footer = Some(f),
        }
    }
    let footer = footer.ok_or_else(|| Error::parse(path, "missing footer line"))?;
    Ok((steps, footer))
}
