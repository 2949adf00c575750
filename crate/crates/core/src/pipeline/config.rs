use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::frontend::{CmvnMode, FrontendConfig};
use crate::segmenter::SegmenterConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MergeStrategy {
    /// Separate k-means runs for transient and steady units.
    #[default]
    Stratified,
    /// One k-means run over all non-silence units.
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmmConfig {
    pub states_per_unit: usize,
    /// Onset / rhyme / offset share of each segment at flat start.
    pub region_fractions: [f64; 3],
    pub variance_floor_factor: f64,
    /// Log-domain score added per decoded unit; negative values discourage insertions.
    pub insertion_penalty: f64,
    pub max_components: usize,
    /// Iterations (1-based, per training stage) after which mixtures are doubled.
    pub mixup_iterations: Vec<usize>,
    /// Constrain decoding to onset → rhyme → offset order.
    pub sequencing: bool,
}

impl Default for HmmConfig {
    fn default() -> Self {
        Self {
            states_per_unit: 3,
            region_fractions: [0.2, 0.6, 0.2],
            variance_floor_factor: 1e-3,
            insertion_penalty: 0.0,
            max_components: 1,
            mixup_iterations: Vec::new(),
            sequencing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub frontend: FrontendConfig,
    pub segmenter: SegmenterConfig,
    pub hmm: HmmConfig,
    pub knn_k: usize,
    pub min_cluster_size: usize,
    /// Optional Sakoe-Chiba band (frames) for the pairwise DTW.
    pub dtw_band: Option<usize>,
    pub stage1_max_iter: usize,
    pub stage2_max_iter: usize,
    /// Stop when an iteration improves the total log-likelihood by less than
    /// this fraction of its magnitude.
    pub rel_ll_tol: f64,
    pub merge_target: usize,
    pub merge_strategy: MergeStrategy,
    /// Occurrences sampled per unit when choosing an exemplar.
    pub exemplar_max_occurrences: usize,
    /// Crossfade between concatenated exemplars, seconds.
    pub crossfade: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            frontend: FrontendConfig::default(),
            segmenter: SegmenterConfig::default(),
            hmm: HmmConfig::default(),
            knn_k: 5,
            min_cluster_size: 3,
            dtw_band: None,
            stage1_max_iter: 15,
            stage2_max_iter: 10,
            rel_ll_tol: 1e-3,
            merge_target: 40,
            merge_strategy: MergeStrategy::Stratified,
            exemplar_max_occurrences: 50,
            crossfade: 0.01,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Settings for the bundled synthetic corpus: CMVN off so isolated
    /// exemplar clips reproduce their in-context features, a small merge
    /// target matching its three syllable types, and onset → rhyme → offset
    /// decoding order.
    pub fn synthetic_preset() -> Self {
        let mut cfg = Self::default();
        cfg.frontend.cmvn = CmvnMode::Off;
        cfg.merge_target = 4;
        cfg.hmm.sequencing = true;
        cfg
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.frontend.validate()?;
        self.segmenter.validate()?;
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        if self.stage1_max_iter < 1 || self.stage2_max_iter < 1 {
            return bad("iteration counts must be at least 1".into());
        }
        if !(self.rel_ll_tol > 0.0) {
            return bad(format!("rel_ll_tol must be positive, got {}", self.rel_ll_tol));
        }
        if self.merge_target < 1 {
            return bad("merge_target must be at least 1".into());
        }
        if self.knn_k < 1 || self.min_cluster_size < 1 {
            return bad("knn_k and min_cluster_size must be at least 1".into());
        }
        if self.hmm.states_per_unit < 1 || self.hmm.max_components < 1 {
            return bad("states_per_unit and max_components must be at least 1".into());
        }
        if self.hmm.region_fractions.iter().any(|f| !(*f > 0.0)) {
            return bad(format!("region fractions must be positive, got {:?}", self.hmm.region_fractions));
        }
        if !(self.hmm.variance_floor_factor > 0.0) || !self.hmm.insertion_penalty.is_finite() {
            return bad("variance_floor_factor must be positive and insertion_penalty finite".into());
        }
        if !(self.crossfade >= 0.0) {
            return bad(format!("crossfade must be non-negative, got {}", self.crossfade));
        }
        Ok(())
    }
}
