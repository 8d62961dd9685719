//! Desk-scale laboratory for Transformer modifications.
//!
//! The crate bundles a small reverse-mode autodiff engine, a Llama-style
//! decoder with twenty swappable modifications, parameter/FLOPs accounting,
//! the multi-seed statistics used to compare methods, a toy training harness
//! and report emitters.

pub mod accounting;
pub mod config;
pub mod error;
pub mod methods;
pub mod model;
pub mod report;
pub mod stats;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use methods::{MethodSpec, MethodTag};
pub use model::{Decoder, ModelConfig};
pub use scalar::Scalar;
pub use tensor::{AttnMask, InitSpec, ParamStore, Parameter, Tensor};

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Decoder64 = Decoder<f64>;
pub type Decoder32 = Decoder<f32>;
