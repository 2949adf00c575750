use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::run::Utterance;
use super::{PipelineConfig, PipelineError, Transcription};
use crate::frontend::{FeatureSequence, Waveform};
use crate::graph::{medoid_of, pairwise_distances};
use crate::hmm::{Alignment, UnitInventory, UnitLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub samples: Vec<f64>,
    pub utterance_id: String,
    pub start_frame: usize,
    pub end_frame: usize,
    /// Occurrences of the unit seen in the decoded corpus.
    pub occurrences: usize,
}

/// Medoid waveform of each unit, for concatenative resynthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarStore {
    pub sample_rate: u32,
    pub exemplars: BTreeMap<UnitLabel, Exemplar>,
    /// Units that were never decoded and so have no exemplar.
    pub missing: Vec<UnitLabel>,
}

impl ExemplarStore {
    pub fn get(&self, label: &UnitLabel) -> Result<&Exemplar, PipelineError> {
        self.exemplars.get(label).ok_or_else(|| {
            if self.missing.contains(label) {
                PipelineError::MissingOccurrence(label.to_string())
            } else {
                PipelineError::UnknownUnit(label.to_string())
            }
        })
    }

    pub fn waveform(&self, label: &UnitLabel) -> Result<Waveform, PipelineError> {
        Ok(Waveform::new(self.get(label)?.samples.clone(), self.sample_rate)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("store serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(s).map_err(|e| PipelineError::InvalidConfig(format!("exemplar store: {e}")))
    }
}

/// Picks, for every non-silence unit, the DTW medoid among up to
/// `cfg.exemplar_max_occurrences` sampled occurrences and stores its audio.
pub fn build_exemplar_store<R: Rng + ?Sized>(
    inv: &UnitInventory,
    utterances: &[Utterance],
    features: &[FeatureSequence],
    alignments: &[Alignment],
    cfg: &PipelineConfig,
    rng: &mut R,
) -> Result<ExemplarStore, PipelineError> {
    let Some(first) = utterances.first() else {
        return Err(PipelineError::EmptyCorpus);
    };
    let sr = first.waveform.sample_rate();
    if let Some(u) = utterances.iter().find(|u| u.waveform.sample_rate() != sr) {
        return Err(crate::frontend::FrontendError::SampleRateMismatch { expected: sr, actual: u.waveform.sample_rate() }.into());
    }
    let mut occ: BTreeMap<UnitLabel, Vec<(usize, usize, usize)>> = BTreeMap::new();
    for (u, a) in alignments.iter().enumerate() {
        for s in a.unit_spans() {
            occ.entry(s.label).or_default().push((u, s.start_frame, s.end_frame));
        }
    }
    let mut store = ExemplarStore { sample_rate: sr, exemplars: BTreeMap::new(), missing: Vec::new() };
    for label in inv.units.keys().filter(|l| !l.is_silence()) {
        let Some(all) = occ.get(label) else {
            store.missing.push(*label);
            continue;
        };
        let chosen: Vec<(usize, usize, usize)> = if all.len() > cfg.exemplar_max_occurrences {
            let mut idx = sample(rng, all.len(), cfg.exemplar_max_occurrences).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| all[i]).collect()
        } else {
            all.clone()
        };
        let slices: Vec<FeatureSequence> = chosen.iter().map(|&(u, s, e)| features[u].slice(s, e)).collect();
        let d = pairwise_distances(&slices, cfg.dtw_band)?;
        let members: Vec<usize> = (0..chosen.len()).collect();
        let (u, s, e) = chosen[medoid_of(&members, |i, j| d.get(i, j))];
        let (a, b) = cfg.frontend.frame_span_samples(sr, s, e);
        store.exemplars.insert(
            *label,
            Exemplar {
                samples: utterances[u].waveform.slice(a, b).into_samples(),
                utterance_id: utterances[u].id.clone(),
                start_frame: s,
                end_frame: e,
                occurrences: all.len(),
            },
        );
    }
    Ok(store)
}

/// Concatenates exemplars with a linear crossfade of `crossfade` seconds;
/// silence tokens become zeros for the token's duration.
pub fn decode_exemplar(store: &ExemplarStore, t: &Transcription, crossfade: f64) -> Result<Waveform, PipelineError> {
    let sr = store.sample_rate;
    let fade = (crossfade.max(0.0) * sr as f64).round() as usize;
    let mut out: Vec<f64> = Vec::new();
    for (k, tok) in t.tokens.iter().enumerate() {
        let piece: Vec<f64> = if tok.label.is_silence() {
            vec![0.0; ((tok.end - tok.start) * sr as f64).round() as usize]
        } else {
            store.get(&tok.label)?.samples.clone()
        };
        let c = if k == 0 { 0 } else { fade.min(out.len()).min(piece.len()) };
        let base = out.len() - c;
        for i in 0..c {
            let a = (i + 1) as f64 / (c + 1) as f64;
            out[base + i] = out[base + i] * (1.0 - a) + piece[i] * a;
        }
        out.extend_from_slice(&piece[c..]);
    }
    Ok(Waveform::new(out, sr)?)
}
