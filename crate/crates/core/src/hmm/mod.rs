//! HMM-GMM acoustic units: diagonal Gaussian mixtures, strictly left-to-right
//! topologies, forced alignment, unit-loop decoding and hard-EM training.

mod gmm;
mod train;
mod unit;
mod viterbi;

use thiserror::Error;

pub use gmm::{log_emission, log_sum_exp, GaussianMixture, PreparedMixture};
pub use train::{
    accumulate, flat_start_feasible, flat_start_regions, flat_start_unit, mix_up, reestimate, reestimate_from, region_bounds, variance_floor,
    Accumulator, FRAMES_PER_COMPONENT, MIN_VARIANCE, MIXUP_PERTURBATION, TRANSITION_FLOOR,
};
pub use unit::{
    HmmUnit, InventoryMeta, IterationRecord, UnitInventory, UnitKind, UnitLabel, INVENTORY_FORMAT,
    INVENTORY_VERSION,
};
pub use viterbi::{score_alignment, viterbi_align, viterbi_decode, Alignment, AlignmentEntry, Grammar, UnitSpan};

#[derive(Debug, Error)]
pub enum HmmError {
    #[error("segment of {frames} frames has a region of {region_frames} frames for {states} states")]
    SegmentTooShort { frames: usize, region_frames: usize, states: usize },
    #[error("feature dimension {actual} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("no path through {states} states in {frames} frames")]
    InfeasibleAlignment { states: usize, frames: usize },
    #[error("unknown unit label {0}")]
    UnknownLabel(String),
    #[error("empty input")]
    EmptyInput,
    #[error("inconsistent alignment: {0}")]
    InconsistentAlignment(String),
    #[error("invalid model: {0}")]
    Invalid(String),
}

impl HmmError {
    pub fn category(&self) -> &'static str {
        match self {
            HmmError::SegmentTooShort { .. } => "SegmentTooShort",
            HmmError::DimensionMismatch { .. } => "DimensionMismatch",
            HmmError::InfeasibleAlignment { .. } => "InfeasibleAlignment",
            HmmError::UnknownLabel(_) => "UnknownLabel",
            HmmError::EmptyInput => "EmptyInput",
            HmmError::InconsistentAlignment(_) => "InconsistentAlignment",
            HmmError::Invalid(_) => "InvalidModel",
        }
    }
}
