//! Toy-scale pretraining: recipe schedule, AdamW, clipping, corpus packing,
//! divergence monitoring and the training loop.

mod corpus;
mod monitor;
mod optim;
mod packing;
mod recipe;
mod run;

pub use corpus::{synthetic_corpus, CorpusSpec, BYTE_VOCAB, SEPARATOR};
pub use monitor::{classify_signature, DivergenceMonitor, Signature, SignatureRules};
pub use optim::{clip_grad, global_norm, AdamW};
pub use packing::{pack_corpus, Packed, PackingOptions, PackingReport};
pub use recipe::{lr_at_step, RecipeConfig};
pub use run::{read_metrics, train_run, write_metrics, MetricsFooter, RunRecord, StepLog, TrainOptions};
