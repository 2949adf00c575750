//! Perceptual acoustic unit discovery from untranscribed audio.
//!
//! The processing chain is:
//! 1. [`frontend`]: WAV ingestion, MFCC (+deltas, CMVN) and a smoothed log-energy contour
//! 2. [`segmenter`]: syllable-like spans from peaks and valleys of the energy contour
//! 3. [`graph`]: pairwise DTW, mutual k-nearest-neighbour graph, connected components
//! 4. [`hmm`]: diagonal-covariance HMM-GMM units with Viterbi alignment, unit-loop
//!    decoding and hard-EM re-estimation
//! 5. [`pipeline`]: two-stage self-training (segments, then continuous speech),
//!    kind-stratified unit merging, encoding and exemplar resynthesis
//! 6. [`eval`]: bitrate, ABX discrimination and clustering quality
//!
//! [`synthetic`] generates deterministic toy corpora used by tests, benches and the CLI demo.

pub mod error;
pub mod eval;
pub mod frontend;
pub mod graph;
pub mod hmm;
pub mod pipeline;
pub mod segmenter;
pub mod synthetic;
pub mod textgrid;

pub use error::{Error, Result};
pub use eval::{abx_error, bitrate, cluster_quality, MetricReport};
pub use frontend::{
    compute_energy_contour, compute_mfcc, read_wav, write_wav, CmvnMode, EnergyContour,
    FeatureSequence, FrontendConfig, Waveform,
};
pub use graph::{
    build_mutual_knn_graph, cluster_medoid, connected_components, dtw_distance,
    pairwise_distances, Clustering, DistanceMatrix, NeighborGraph,
};
pub use hmm::{
    Alignment, AlignmentEntry, GaussianMixture, HmmUnit, UnitInventory, UnitKind, UnitLabel,
};
pub use pipeline::{
    CorpusManifest, ExemplarStore, PipelineConfig, Token, Transcription,
};
pub use segmenter::{segment_syllables, Segment, SegmenterConfig};
