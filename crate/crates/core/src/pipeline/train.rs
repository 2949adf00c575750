use std::collections::BTreeMap;

use rayon::prelude::*;

use super::merge::{merge_units, LabelMap};
use super::{PipelineConfig, PipelineError};
use crate::frontend::FeatureSequence;
use crate::graph::Clustering;
use crate::hmm::{
    flat_start_feasible, flat_start_regions, flat_start_unit, mix_up, reestimate, score_alignment, variance_floor,
    viterbi_align, viterbi_decode, Alignment, Grammar, HmmError, IterationRecord, UnitInventory, UnitKind, UnitLabel,
};

/// A feature sequence with a fixed unit transcript.
#[derive(Debug, Clone)]
pub struct TrainingItem {
    pub features: FeatureSequence,
    pub transcript: Vec<UnitLabel>,
}

fn states_in(inv: &UnitInventory, transcript: &[UnitLabel]) -> usize {
    transcript.iter().map(|l| inv.units.get(l).map_or(usize::MAX / 4, |u| u.num_states())).sum()
}

/// Stage-1 transcripts: every segment of a cluster that owns units gets
/// `(OS_i, RH_i, OF_i)`; every silence gap gets `(SIL)`. Sequences too short
/// for their transcript are left out.
pub fn stage1_items(
    inv: &UnitInventory,
    clustering: &Clustering,
    segments: &[FeatureSequence],
    silence: &[FeatureSequence],
) -> Vec<TrainingItem> {
    let index_of: BTreeMap<usize, usize> = inv.meta.cluster_of_index.iter().map(|(i, c)| (*c, *i)).collect();
    let mut items = Vec::new();
    for (seg, &cluster) in segments.iter().zip(&clustering.assignment) {
        let Some(&i) = index_of.get(&cluster) else { continue };
        let transcript: Vec<UnitLabel> =
            [UnitKind::Onset, UnitKind::Rhyme, UnitKind::Offset].iter().map(|k| UnitLabel::new(*k, i)).collect();
        if seg.num_frames() >= states_in(inv, &transcript) {
            items.push(TrainingItem { features: seg.clone(), transcript });
        }
    }
    if inv.units.contains_key(&UnitLabel::SILENCE) {
        for gap in silence {
            if gap.num_frames() >= states_in(inv, &[UnitLabel::SILENCE]) {
                items.push(TrainingItem { features: gap.clone(), transcript: vec![UnitLabel::SILENCE] });
            }
        }
    }
    items
}

/// Flat-starts onset/rhyme/offset units for every cluster with at least
/// `min_cluster_size` members long enough for the region split, plus a
/// silence unit from the inter-segment gaps, then self-trains on the fixed
/// transcripts.
pub fn stage1_train(
    clustering: &Clustering,
    segments: &[FeatureSequence],
    silence: &[FeatureSequence],
    cfg: &PipelineConfig,
) -> Result<UnitInventory, PipelineError> {
    cfg.validate()?;
    if segments.len() != clustering.assignment.len() {
        return Err(PipelineError::InvalidConfig(format!(
            "clustering covers {} segments but {} were given",
            clustering.assignment.len(),
            segments.len()
        )));
    }
    let Some(first) = segments.first() else {
        return Err(PipelineError::NoUsableClusters { min_size: cfg.min_cluster_size });
    };
    let dim = first.dim();
    let states = cfg.hmm.states_per_unit;
    let fractions = cfg.hmm.region_fractions;
    let all_frames = segments.iter().chain(silence).flat_map(|s| s.frames());
    let floor = variance_floor(all_frames, dim, cfg.hmm.variance_floor_factor);
    let mut inv = UnitInventory::new(dim, floor.clone());
    for (cid, members) in clustering.clusters.iter().enumerate() {
        let usable: Vec<FeatureSequence> = members
            .iter()
            .map(|&m| &segments[m])
            .filter(|s| flat_start_feasible(s.num_frames(), &fractions, states))
            .cloned()
            .collect();
        if usable.len() < cfg.min_cluster_size {
            continue;
        }
        let index = inv.meta.cluster_of_index.len();
        for unit in flat_start_unit(&usable, fractions, index, states, &floor)? {
            inv.insert(unit);
        }
        inv.meta.cluster_of_index.insert(index, cid);
    }
    if inv.is_empty() {
        return Err(PipelineError::NoUsableClusters { min_size: cfg.min_cluster_size });
    }
    let gaps: Vec<FeatureSequence> = silence.iter().filter(|g| g.num_frames() >= states).cloned().collect();
    // Without usable gaps the silence unit starts as a broad background model.
    let sil_data: Vec<FeatureSequence> = if gaps.is_empty() {
        segments.iter().filter(|s| s.num_frames() >= states).cloned().collect()
    } else {
        gaps
    };
    if !sil_data.is_empty() {
        let sil = flat_start_regions(&sil_data, &[1.0], &[UnitLabel::SILENCE], states, &floor)?;
        inv.insert(sil.into_iter().next().expect("one unit"));
    }
    inv.meta.stage = "flat-start".into();
    inv.meta.seed = Some(cfg.seed);
    let items = stage1_items(&inv, clustering, segments, silence);
    train_fixed_transcripts(inv, &items, cfg, "stage1")
}

/// Align / re-estimate loop over fixed transcripts.
pub fn train_fixed_transcripts(
    inv: UnitInventory,
    items: &[TrainingItem],
    cfg: &PipelineConfig,
    stage: &str,
) -> Result<UnitInventory, PipelineError> {
    let feats: Vec<&FeatureSequence> = items.iter().map(|i| &i.features).collect();
    self_train(inv, &feats, cfg, stage, cfg.stage1_max_iter, None, |inv, i| {
        viterbi_align(inv, &items[i].features, &items[i].transcript)
    })
}

fn grammar(inv: &UnitInventory, cfg: &PipelineConfig) -> Grammar {
    Grammar::unit_loop(inv.labels(), cfg.hmm.insertion_penalty).with_sequencing(cfg.hmm.sequencing)
}

/// Unit-loop decoding of every utterance, in parallel, results in input order.
pub fn decode_all(
    inv: &UnitInventory,
    utterances: &[FeatureSequence],
    cfg: &PipelineConfig,
) -> Result<Vec<Alignment>, PipelineError> {
    let g = grammar(inv, cfg);
    Ok(utterances.par_iter().map(|f| viterbi_decode(inv, f, &g)).collect::<Result<_, _>>()?)
}

/// Decode / re-estimate loop on continuous utterances.
pub fn stage2_train(
    inv: UnitInventory,
    utterances: &[FeatureSequence],
    cfg: &PipelineConfig,
) -> Result<UnitInventory, PipelineError> {
    stage2_named(inv, utterances, cfg, "stage2")
}

fn stage2_named(
    inv: UnitInventory,
    utterances: &[FeatureSequence],
    cfg: &PipelineConfig,
    stage: &str,
) -> Result<UnitInventory, PipelineError> {
    cfg.validate()?;
    if utterances.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    if !inv.meta.iterations.iter().any(|r| r.stage.ends_with("stage1")) {
        return Err(PipelineError::NotTrained(inv.meta.stage.clone()));
    }
    let g = grammar(&inv, cfg);
    let feats: Vec<&FeatureSequence> = utterances.iter().collect();
    self_train(inv, &feats, cfg, stage, cfg.stage2_max_iter, Some(cfg.hmm.insertion_penalty), |inv, i| {
        viterbi_decode(inv, &utterances[i], &g)
    })
}

pub fn map_items(items: &[TrainingItem], map: &LabelMap) -> Vec<TrainingItem> {
    items
        .iter()
        .map(|it| TrainingItem {
            features: it.features.clone(),
            transcript: it.transcript.iter().map(|l| map.get(l).copied().unwrap_or(*l)).collect(),
        })
        .collect()
}

/// Merges System 1 down to `cfg.merge_target` units and repeats both
/// training stages with the merged labels.
pub fn system2_train(
    system1: &UnitInventory,
    stage1_items: &[TrainingItem],
    utterances: &[FeatureSequence],
    cfg: &PipelineConfig,
) -> Result<(UnitInventory, LabelMap), PipelineError> {
    let (merged, map) = merge_units(system1, cfg.merge_target, cfg)?;
    let items = map_items(stage1_items, &map);
    let inv = train_fixed_transcripts(merged, &items, cfg, "system2/stage1")?;
    let inv = stage2_named(inv, utterances, cfg, "system2/stage2")?;
    Ok((inv, map))
}

/// Shared self-training loop.
///
/// Each iteration relabels every sequence with the current model (score
/// `L_k`), re-estimates, optionally mixes up, and rescores the same labels
/// under the new model (`R_k`). Hard EM gives `L_k <= R_k <= L_{k+1}`. The
/// loop stops once `R_k - L_k <= rel_ll_tol * |L_k|` or after `max_iter`.
fn self_train(
    mut inv: UnitInventory,
    feats: &[&FeatureSequence],
    cfg: &PipelineConfig,
    stage: &str,
    max_iter: usize,
    penalty: Option<f64>,
    label: impl Fn(&UnitInventory, usize) -> Result<Alignment, HmmError> + Sync,
) -> Result<UnitInventory, PipelineError> {
    if feats.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    let frames: usize = feats.iter().map(|f| f.num_frames()).sum();
    for it in 1..=max_iter {
        let aligns: Vec<Alignment> = (0..feats.len()).into_par_iter().map(|i| label(&inv, i)).collect::<Result<_, _>>()?;
        let ll: f64 = aligns.iter().map(|a| a.total_log_likelihood).sum();
        let data: Vec<(&FeatureSequence, &Alignment)> = feats.iter().copied().zip(&aligns).collect();
        let mut next = reestimate(&inv, &data)?;
        if cfg.hmm.mixup_iterations.contains(&it) && cfg.hmm.max_components > 1 {
            next = mix_up(&next, &data, cfg.hmm.max_components)?.0;
        }
        let rescored: f64 = data
            .par_iter()
            .map(|(f, a)| score_alignment(&next, f, a, penalty))
            .collect::<Result<Vec<f64>, _>>()?
            .iter()
            .sum();
        let converged = rescored - ll <= cfg.rel_ll_tol * ll.abs();
        inv = next;
        inv.meta.stage = stage.to_string();
        inv.meta.seed = Some(cfg.seed);
        inv.meta.iterations.push(IterationRecord {
            stage: stage.to_string(),
            iteration: it,
            log_likelihood: ll,
            rescored_log_likelihood: rescored,
            frames,
            converged,
        });
        if converged {
            break;
        }
    }
    Ok(inv)
}
