//! Llama-style decoder: pre-norm blocks, grouped-query causal attention with
//! rotary embeddings, RMSNorm, SwiGLU and tied embeddings. Every modification
//! is dispatched from a [`MethodSpec`](crate::methods::MethodSpec).

mod attention;
pub mod checkpoint;
mod config;
mod decoder;
mod ffn;

pub use attention::{AttnContext, AttnTrace, Attention};
pub use config::ModelConfig;
pub use decoder::{Decoder, ForwardOptions, ForwardOutput};
pub use ffn::FeedForward;
