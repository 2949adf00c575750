use serde::{Deserialize, Serialize};

use super::train::decode_all;
use super::{PipelineConfig, PipelineError};
use crate::eval::{bitrate, Bitrate, EvalError};
use crate::frontend::{compute_mfcc, FeatureSequence, Waveform};
use crate::hmm::{Alignment, UnitInventory, UnitLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub label: UnitLabel,
    pub start_frame: usize,
    pub end_frame: usize,
    /// Seconds.
    pub start: f64,
    pub end: f64,
}

/// Decoded unit sequence of one utterance; tokens tile `[0, num_frames)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcription {
    pub utterance_id: String,
    pub tokens: Vec<Token>,
    pub num_frames: usize,
    pub frame_shift: f64,
    /// Audio duration in seconds.
    pub duration: f64,
}

impl Transcription {
    pub fn from_alignment(utterance_id: &str, a: &Alignment, frame_shift: f64, duration: f64) -> Self {
        let tokens = a
            .unit_spans()
            .into_iter()
            .map(|s| Token {
                label: s.label,
                start_frame: s.start_frame,
                end_frame: s.end_frame,
                start: s.start_frame as f64 * frame_shift,
                end: s.end_frame as f64 * frame_shift,
            })
            .collect();
        Self { utterance_id: utterance_id.to_string(), tokens, num_frames: a.num_frames(), frame_shift, duration }
    }

    pub fn labels(&self) -> Vec<UnitLabel> {
        self.tokens.iter().map(|t| t.label).collect()
    }

    pub fn tiles(&self) -> bool {
        let mut cursor = 0;
        for t in &self.tokens {
            if t.start_frame != cursor || t.end_frame <= t.start_frame {
                return false;
            }
            cursor = t.end_frame;
        }
        cursor == self.num_frames
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcription serializes")
    }
}

/// Unit-loop decoding of precomputed features.
pub fn encode_features(
    inv: &UnitInventory,
    f: &FeatureSequence,
    cfg: &PipelineConfig,
    utterance_id: &str,
    duration: f64,
) -> Result<Transcription, PipelineError> {
    let a = decode_all(inv, std::slice::from_ref(f), cfg)?.pop().expect("one alignment");
    Ok(Transcription::from_alignment(utterance_id, &a, f.frame_shift, duration))
}

/// Front end followed by unit-loop decoding.
pub fn encode(inv: &UnitInventory, w: &Waveform, cfg: &PipelineConfig) -> Result<Transcription, PipelineError> {
    let f = compute_mfcc(w, &cfg.frontend)?;
    encode_features(inv, &f, cfg, "", w.duration())
}

/// Bitrate over a set of transcriptions, using their summed audio durations.
pub fn corpus_bitrate(transcriptions: &[Transcription]) -> Result<Bitrate, EvalError> {
    let labels: Vec<Vec<UnitLabel>> = transcriptions.iter().map(Transcription::labels).collect();
    let duration: f64 = transcriptions.iter().map(|t| t.duration).sum();
    bitrate(labels.iter().map(Vec::as_slice), duration)
}
