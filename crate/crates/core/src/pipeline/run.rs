//! End-to-end driver: front end, segmentation, clustering, both training
//! stages for System 1, merging for System 2, decoding and exemplars.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::exemplar::{build_exemplar_store, ExemplarStore};
use super::merge::LabelMap;
use super::train::{decode_all, stage1_items, stage1_train, stage2_train, system2_train, TrainingItem};
use super::{PipelineConfig, PipelineError, Transcription};
use crate::frontend::{compute_energy_contour, compute_mfcc, EnergyContour, FeatureSequence, Waveform};
use crate::graph::{build_mutual_knn_graph, connected_components, pairwise_distances, Clustering, DistanceMatrix, NeighborGraph};
use crate::hmm::{Alignment, UnitInventory};
use crate::segmenter::{extract_segment_features, segment_syllables, Segment};

#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub waveform: Waveform,
}

/// Per-utterance front-end output plus the corpus-wide segment list.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub features: Vec<FeatureSequence>,
    pub contours: Vec<EnergyContour>,
    pub segments: Vec<Segment>,
    /// Utterance index of each segment.
    pub segment_utterance: Vec<usize>,
    pub segment_features: Vec<FeatureSequence>,
    /// Maximal runs of frames outside every segment.
    pub silence: Vec<FeatureSequence>,
}

pub fn analyze(utterances: &[Utterance], cfg: &PipelineConfig) -> Result<Analysis, PipelineError> {
    cfg.validate()?;
    if utterances.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    let per_utt: Vec<(FeatureSequence, EnergyContour, Vec<Segment>)> = utterances
        .par_iter()
        .map(|u| -> Result<_, PipelineError> {
            let f = compute_mfcc(&u.waveform, &cfg.frontend)?;
            let e = compute_energy_contour(&u.waveform, &cfg.frontend)?;
            let segs = segment_syllables(&u.id, &e, &cfg.segmenter);
            Ok((f, e, segs))
        })
        .collect::<Result<_, _>>()?;
    let mut a = Analysis {
        features: Vec::new(),
        contours: Vec::new(),
        segments: Vec::new(),
        segment_utterance: Vec::new(),
        segment_features: Vec::new(),
        silence: Vec::new(),
    };
    for (u, (f, e, segs)) in per_utt.into_iter().enumerate() {
        for s in &segs {
            a.segment_features.push(extract_segment_features(&f, s)?);
            a.segment_utterance.push(u);
        }
        a.silence.extend(silence_gaps(&f, &segs));
        a.segments.extend(segs);
        a.features.push(f);
        a.contours.push(e);
    }
    Ok(a)
}

/// Frame runs of `f` not covered by any of `segments`.
pub fn silence_gaps(f: &FeatureSequence, segments: &[Segment]) -> Vec<FeatureSequence> {
    let n = f.num_frames();
    let mut covered = vec![false; n];
    for s in segments {
        for c in &mut covered[s.start_frame.min(n)..s.end_frame.min(n)] {
            *c = true;
        }
    }
    let mut gaps = Vec::new();
    let mut t = 0;
    while t < n {
        if covered[t] {
            t += 1;
            continue;
        }
        let start = t;
        while t < n && !covered[t] {
            t += 1;
        }
        gaps.push(f.slice(start, t));
    }
    gaps
}

#[derive(Debug, Clone)]
pub struct Discovery {
    pub distances: DistanceMatrix,
    pub graph: NeighborGraph,
    pub clustering: Clustering,
    /// Stage-1 inventory.
    pub inventory: UnitInventory,
    pub items: Vec<TrainingItem>,
}

/// DTW graph clustering of the segments followed by stage-1 training.
pub fn discover(a: &Analysis, cfg: &PipelineConfig) -> Result<Discovery, PipelineError> {
    if a.segment_features.is_empty() {
        return Err(PipelineError::NoUsableClusters { min_size: cfg.min_cluster_size });
    }
    let distances = pairwise_distances(&a.segment_features, cfg.dtw_band)?;
    let graph = build_mutual_knn_graph(&distances, cfg.knn_k);
    let clustering = connected_components(&graph);
    let inventory = stage1_train(&clustering, &a.segment_features, &a.silence, cfg)?;
    let items = stage1_items(&inventory, &clustering, &a.segment_features, &a.silence);
    Ok(Discovery { distances, graph, clustering, inventory, items })
}

#[derive(Debug, Clone)]
pub struct SystemRun {
    pub inventory: UnitInventory,
    pub alignments: Vec<Alignment>,
    pub transcriptions: Vec<Transcription>,
}

impl SystemRun {
    /// Unit-loop decoding of every utterance with `inventory`.
    pub fn decode(
        inventory: UnitInventory,
        utterances: &[Utterance],
        features: &[FeatureSequence],
        cfg: &PipelineConfig,
    ) -> Result<Self, PipelineError> {
        let alignments = decode_all(&inventory, features, cfg)?;
        let transcriptions = alignments
            .iter()
            .zip(utterances.iter().zip(features))
            .map(|(al, (u, f))| Transcription::from_alignment(&u.id, al, f.frame_shift, u.waveform.duration()))
            .collect();
        Ok(Self { inventory, alignments, transcriptions })
    }

    /// Exemplar store for this system's units, sampling with a generator seeded from `cfg.seed`.
    pub fn exemplars(
        &self,
        utterances: &[Utterance],
        features: &[FeatureSequence],
        cfg: &PipelineConfig,
    ) -> Result<ExemplarStore, PipelineError> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        build_exemplar_store(&self.inventory, utterances, features, &self.alignments, cfg, &mut rng)
    }
}

#[derive(Debug, Clone)]
pub struct FullRun {
    pub analysis: Analysis,
    pub discovery: Discovery,
    pub system1: SystemRun,
    pub system2: SystemRun,
    pub map: LabelMap,
    /// Exemplars of the System 2 units.
    pub exemplars: ExemplarStore,
}

pub fn run_full(utterances: &[Utterance], cfg: &PipelineConfig) -> Result<FullRun, PipelineError> {
    let analysis = analyze(utterances, cfg)?;
    let discovery = discover(&analysis, cfg)?;
    let s1 = stage2_train(discovery.inventory.clone(), &analysis.features, cfg)?;
    let system1 = SystemRun::decode(s1, utterances, &analysis.features, cfg)?;
    let (s2, map) = system2_train(&system1.inventory, &discovery.items, &analysis.features, cfg)?;
    let system2 = SystemRun::decode(s2, utterances, &analysis.features, cfg)?;
    let exemplars = system2.exemplars(utterances, &analysis.features, cfg)?;
    Ok(FullRun { analysis, discovery, system1, system2, map, exemplars })
}
