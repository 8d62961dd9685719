//! Multi-seed significance machinery: noise floors, bootstrap, Welch's t,
//! multiple-testing corrections, Stouffer combination and Spearman's ρ.

mod bootstrap;
mod corrections;
mod floor;
mod rank;
mod hypothesis;

pub use bootstrap::{bootstrap_floor, BootstrapOutcome, DEFAULT_RESAMPLES};
pub use corrections::{
    benjamini_hochberg, bonferroni, correct, holm, p_bonferroni, p_two_sided, Correction,
    CorrectionOutcome,
};
pub use floor::{mean, round_sig, sample_std, zscore, NoiseFloor, SeedSet};
pub use rank::{average_ranks, spearman_rho};
pub use hypothesis::{per_task_stouffer, stouffer_combine, welch_t, StoufferOutcome, WelchOutcome};

/// Non-baseline hypotheses in the main comparison.
pub const FAMILY_SIZE: usize = 19;
/// Family-wise / false-discovery level.
pub const ALPHA: f64 = 0.05;
