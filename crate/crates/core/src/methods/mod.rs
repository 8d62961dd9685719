//! The modification catalogue: tags, slot assignments and the mechanisms
//! behind each interchange point.

pub mod classify;
pub mod mixing;
pub mod residual;
mod spec;
pub mod structure;

pub use spec::{
    diff_lambda_init, AttnStructure, Category, FfnKind, MethodSpec, MethodTag, Mixing,
    NormPlacement, ResidualKind, SoftHard, ATTNRES_QUERY_STD, HYPER_BETA_LOGIT, LAYERSCALE_GAMMA,
    SOFTMAX_CAP, VALUE_RESIDUAL_LAMBDA,
};
