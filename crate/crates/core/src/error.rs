use thiserror::Error;

use crate::eval::EvalError;
use crate::frontend::FrontendError;
use crate::graph::GraphError;
use crate::hmm::HmmError;
use crate::pipeline::PipelineError;
use crate::segmenter::SegmentError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-wide error, one variant per subsystem.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Hmm(#[from] HmmError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl Error {
    /// Stable, machine-parsable category name for the failure.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Frontend(e) => e.category(),
            Error::Segment(e) => e.category(),
            Error::Graph(e) => e.category(),
            Error::Hmm(e) => e.category(),
            Error::Pipeline(e) => e.category(),
            Error::Eval(e) => e.category(),
        }
    }
}
