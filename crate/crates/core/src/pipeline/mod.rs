//! Discovery orchestration: stage-1 training on clustered segments, stage-2
//! self-training on continuous speech, unit merging, encoding and exemplar
//! resynthesis.

mod config;
mod encode;
mod exemplar;
mod manifest;
mod merge;
mod run;
mod train;

use thiserror::Error;

use crate::frontend::FrontendError;
use crate::graph::GraphError;
use crate::hmm::HmmError;
use crate::segmenter::SegmentError;

pub use config::{HmmConfig, MergeStrategy, PipelineConfig};
pub use encode::{corpus_bitrate, encode, encode_features, Token, Transcription};
pub use exemplar::{build_exemplar_store, decode_exemplar, Exemplar, ExemplarStore};
pub use manifest::{CorpusManifest, ManifestEntry, Split};
pub use merge::{kmeans, merge_units, merge_units_with_rng, unit_embedding, LabelMap};
pub use run::{analyze, discover, run_full, silence_gaps, Analysis, Discovery, FullRun, SystemRun, Utterance};
pub use train::{
    decode_all, map_items, stage1_items, stage1_train, stage2_train, system2_train, train_fixed_transcripts,
    TrainingItem,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no cluster has at least {min_size} usable segments")]
    NoUsableClusters { min_size: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("inventory has not been through stage-1 training (stage is {0:?})")]
    NotTrained(String),
    #[error("merge target {target} is below the number of unit kinds {kinds}")]
    TargetExceedsKinds { target: usize, kinds: usize },
    #[error("unit {0} was never decoded")]
    MissingOccurrence(String),
    #[error("no exemplar for unit {0}")]
    UnknownUnit(String),
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("duplicate utterance id {0}")]
    DuplicateId(String),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Hmm(#[from] HmmError),
}

impl PipelineError {
    pub fn category(&self) -> &'static str {
        match self {
            PipelineError::NoUsableClusters { .. } => "NoUsableClusters",
            PipelineError::EmptyCorpus => "EmptyCorpus",
            PipelineError::NotTrained(_) => "NotTrained",
            PipelineError::TargetExceedsKinds { .. } => "TargetExceedsKinds",
            PipelineError::MissingOccurrence(_) => "MissingOccurrence",
            PipelineError::UnknownUnit(_) => "UnknownUnit",
            PipelineError::InvalidConfig(_) => "InvalidConfig",
            PipelineError::Manifest(_) => "Manifest",
            PipelineError::DuplicateId(_) => "DuplicateId",
            PipelineError::Frontend(e) => e.category(),
            PipelineError::Segment(e) => e.category(),
            PipelineError::Graph(e) => e.category(),
            PipelineError::Hmm(e) => e.category(),
        }
    }
}
