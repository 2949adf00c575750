//! Syllable-like segmentation from peaks and valleys of the energy contour.
//!
//! Each segment runs valley-to-valley around one sonority peak. A valley only
//! separates two peaks when it is at least `valley_depth` dB below the lower of
//! them. Frames within `silence_margin` dB of the contour's minimum belong to
//! no segment. Durations are repaired by merging short segments into the
//! neighbour behind the lower valley, then splitting overlong segments at their
//! deepest interior valley.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{EnergyContour, FeatureSequence};
use crate::textgrid::{IntervalTier, TextGrid};

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("segment [{start}, {end}) out of range for {frames} frames")]
    OutOfRange { start: usize, end: usize, frames: usize },
    #[error("invalid segmenter config: {0}")]
    InvalidConfig(String),
}

impl SegmentError {
    pub fn category(&self) -> &'static str {
        match self {
            SegmentError::OutOfRange { .. } => "OutOfRange",
            SegmentError::InvalidConfig(_) => "InvalidConfig",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub utterance_id: String,
    pub start_frame: usize,
    /// Exclusive.
    pub end_frame: usize,
    pub peak_frame: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame
    }

    pub fn is_empty(&self) -> bool {
        self.end_frame <= self.start_frame
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmenterConfig {
    pub min_seg_dur: f64,
    pub max_seg_dur: f64,
    /// dB a valley must sit below the lower adjacent peak to split.
    pub valley_depth: f64,
    /// dB above the contour floor below which frames count as silence.
    pub silence_margin: f64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self { min_seg_dur: 0.08, max_seg_dur: 0.60, valley_depth: 3.0, silence_margin: 6.0 }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<(), SegmentError> {
        if !(self.min_seg_dur > 0.0 && self.min_seg_dur < self.max_seg_dur) {
            return Err(SegmentError::InvalidConfig(format!(
                "need 0 < min_seg_dur < max_seg_dur, got {} and {}",
                self.min_seg_dur, self.max_seg_dur
            )));
        }
        Ok(())
    }

    fn frame_bounds(&self, frame_shift: f64) -> (usize, usize) {
        let min = ((self.min_seg_dur / frame_shift) - 1e-9).ceil().max(1.0) as usize;
        let max = ((self.max_seg_dur / frame_shift) + 1e-9).floor().max(min as f64) as usize;
        (min, max)
    }
}

/// Half-open frame span with its peak; working representation inside one region.
#[derive(Debug, Clone, Copy)]
struct Span {
    start: usize,
    end: usize,
}

pub fn segment_syllables(utterance_id: &str, e: &EnergyContour, cfg: &SegmenterConfig) -> Vec<Segment> {
    if e.is_empty() {
        return Vec::new();
    }
    let x = &e.values;
    let reference = x.iter().copied().fold(f64::INFINITY, f64::min);
    let threshold = reference + cfg.silence_margin;
    let (min_frames, max_frames) = cfg.frame_bounds(e.frame_shift);

    let mut out = Vec::new();
    for (a, b) in active_regions(x, &e.raw, threshold) {
        let mut spans = peak_valley_spans(x, a, b, cfg.valley_depth);
        merge_short(x, &mut spans, min_frames);
        for span in spans {
            split_long(x, span, min_frames, max_frames, &mut out);
        }
    }
    out.into_iter()
        .map(|s| Segment {
            utterance_id: utterance_id.to_string(),
            start_frame: s.start,
            end_frame: s.end,
            peak_frame: argmax(x, s.start, s.end),
        })
        .collect()
}

/// Maximal runs above threshold on the smoothed contour, with edges trimmed
/// back to where the unsmoothed energy also clears the threshold.
fn active_regions(x: &[f64], raw: &[f64], threshold: f64) -> Vec<(usize, usize)> {
    let mut regions = Vec::new();
    let mut t = 0;
    while t < x.len() {
        if x[t] < threshold {
            t += 1;
            continue;
        }
        let mut end = t;
        while end < x.len() && x[end] >= threshold {
            end += 1;
        }
        let (mut a, mut b) = (t, end);
        if raw.len() == x.len() {
            while a < b && raw[a] < threshold {
                a += 1;
            }
            while b > a && raw[b - 1] < threshold {
                b -= 1;
            }
        }
        if a < b {
            regions.push((a, b));
        }
        t = end;
    }
    regions
}

fn argmax(x: &[f64], a: usize, b: usize) -> usize {
    let mut best = a;
    for t in a + 1..b {
        if x[t] > x[best] {
            best = t;
        }
    }
    best
}

fn argmin(x: &[f64], a: usize, b: usize) -> usize {
    let mut best = a;
    for t in a + 1..b {
        if x[t] < x[best] {
            best = t;
        }
    }
    best
}

/// Splits region `[a, b)` at valleys deep enough relative to both neighbouring peaks.
fn peak_valley_spans(x: &[f64], a: usize, b: usize, valley_depth: f64) -> Vec<Span> {
    let mut peaks = Vec::new();
    let mut t = a;
    while t < b {
        let mut end = t;
        while end + 1 < b && x[end + 1] == x[t] {
            end += 1;
        }
        let left_lower = t == a || x[t - 1] < x[t];
        let right_lower = end + 1 == b || x[end + 1] < x[t];
        if left_lower && right_lower {
            peaks.push(t);
        }
        t = end + 1;
    }
    if peaks.is_empty() {
        peaks.push(argmax(x, a, b));
    }

    // Merge across the shallowest insufficient valley until every valley qualifies.
    loop {
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..peaks.len().saturating_sub(1) {
            let v = argmin(x, peaks[i], peaks[i + 1] + 1);
            let depth = x[peaks[i]].min(x[peaks[i + 1]]) - x[v];
            if worst.is_none_or(|(_, d)| depth < d) {
                worst = Some((i, depth));
            }
        }
        match worst {
            Some((i, depth)) if depth < valley_depth => {
                let keep = if x[peaks[i + 1]] > x[peaks[i]] { peaks[i + 1] } else { peaks[i] };
                peaks[i] = keep;
                peaks.remove(i + 1);
            }
            _ => break,
        }
    }

    let mut bounds = vec![a];
    for w in peaks.windows(2) {
        bounds.push(argmin(x, w[0], w[1] + 1));
    }
    bounds.push(b);
    bounds.windows(2).map(|w| Span { start: w[0], end: w[1] }).collect()
}

/// Merges each too-short span into the neighbour behind the lower shared
/// valley (ties to the left); an isolated short span is dropped.
fn merge_short(x: &[f64], spans: &mut Vec<Span>, min_frames: usize) {
    while let Some(i) = spans.iter().position(|s| s.end - s.start < min_frames) {
        if spans.len() == 1 {
            spans.clear();
            break;
        }
        let left_valley = (i > 0).then(|| x[spans[i].start]);
        let right_valley = (i + 1 < spans.len()).then(|| x[spans[i].end]);
        let merge_left = match (left_valley, right_valley) {
            (Some(l), Some(r)) => l <= r,
            (Some(_), None) => true,
            _ => false,
        };
        if merge_left {
            spans[i - 1].end = spans[i].end;
        } else {
            spans[i + 1].start = spans[i].start;
        }
        spans.remove(i);
    }
}

fn split_long(x: &[f64], span: Span, min_frames: usize, max_frames: usize, out: &mut Vec<Span>) {
    let len = span.end - span.start;
    if len <= max_frames {
        out.push(span);
        return;
    }
    let lo = span.start + min_frames;
    let hi = span.end.saturating_sub(min_frames);
    let cut = if lo <= hi { argmin(x, lo, hi + 1) } else { span.start + len / 2 };
    split_long(x, Span { start: span.start, end: cut }, min_frames, max_frames, out);
    split_long(x, Span { start: cut, end: span.end }, min_frames, max_frames, out);
}

pub fn extract_segment_features(f: &FeatureSequence, s: &Segment) -> Result<FeatureSequence, SegmentError> {
    if s.start_frame >= s.end_frame || s.end_frame > f.num_frames() {
        return Err(SegmentError::OutOfRange {
            start: s.start_frame,
            end: s.end_frame,
            frames: f.num_frames(),
        });
    }
    Ok(f.slice(s.start_frame, s.end_frame))
}

/// One JSON object per line: `utterance_id`, `start_s`, `end_s`, `peak_s`.
pub fn segments_to_jsonl(segments: &[Segment], frame_shift: f64) -> String {
    let mut out = String::new();
    for s in segments {
        let row = serde_json::json!({
            "utterance_id": s.utterance_id,
            "start_s": s.start_frame as f64 * frame_shift,
            "end_s": s.end_frame as f64 * frame_shift,
            "peak_s": s.peak_frame as f64 * frame_shift,
        });
        out.push_str(&row.to_string());
        out.push('\n');
    }
    out
}

/// Interval tier named `syllables` with one interval per segment.
pub fn segments_to_textgrid(segments: &[Segment], frame_shift: f64, duration: f64) -> TextGrid {
    let mut tier = IntervalTier::new("syllables");
    for (i, s) in segments.iter().enumerate() {
        tier.push(s.start_frame as f64 * frame_shift, s.end_frame as f64 * frame_shift, format!("seg{i}"));
    }
    let mut tg = TextGrid::new(duration);
    tg.tiers.push(tier);
    tg
}
