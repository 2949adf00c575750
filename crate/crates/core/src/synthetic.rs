//! Deterministic toy data: noise, feature-level CVC templates and an
//! audio-level syllable synthesizer with digital-silence gaps.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::frontend::{FeatureSequence, Waveform};

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform noise in `[-amp, amp]`.
pub fn white_noise(n: usize, amp: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-amp..=amp)).collect()
}

/// Feature-space prototype of a consonant-vowel-consonant syllable.
#[derive(Debug, Clone, PartialEq)]
pub struct CvcTemplate {
    pub onset: Vec<f64>,
    pub vowel: Vec<f64>,
    pub coda: Vec<f64>,
}

/// Fraction of a rendered instance spent in the onset and in the coda.
pub const TRANSITION_FRACTION: f64 = 0.2;

/// `n` templates separated along the first dimension by 10 units; other
/// dimensions carry seeded offsets.
pub fn cvc_templates(n: usize, dim: usize, seed: u64) -> Vec<CvcTemplate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|j| {
            let base = 10.0 * j as f64;
            let mut part = |first: f64| {
                let mut v = vec![first];
                v.extend((1..dim).map(|_| 2.0 * gaussian(&mut rng)));
                v
            };
            CvcTemplate { onset: part(base + 1.0), vowel: part(base + 6.0), coda: part(base + 3.0) }
        })
        .collect()
}

/// Silence frame matching [`cvc_templates`]: far below every template.
pub fn silence_vector(dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[0] = -12.0;
    v
}

/// Onset ramp into a steady vowel and a ramp out to the coda, plus i.i.d. noise.
pub fn render_cvc<R: Rng + ?Sized>(t: &CvcTemplate, len: usize, noise: f64, rng: &mut R) -> FeatureSequence {
    let dim = t.vowel.len();
    let n_on = ((len as f64 * TRANSITION_FRACTION).round() as usize).max(1);
    let n_off = n_on;
    let mut data = Vec::with_capacity(len * dim);
    for i in 0..len {
        for d in 0..dim {
            let clean = if i < n_on {
                let a = (i as f64 + 0.5) / n_on as f64;
                t.onset[d] + (t.vowel[d] - t.onset[d]) * a
            } else if i >= len - n_off {
                let a = (i - (len - n_off)) as f64 / n_off as f64 + 0.5 / n_off as f64;
                t.vowel[d] + (t.coda[d] - t.vowel[d]) * a
            } else {
                t.vowel[d]
            };
            data.push(clean + noise * gaussian(rng));
        }
    }
    FeatureSequence::from_flat(data, dim, 0.01, 0.025)
}

pub fn render_silence<R: Rng + ?Sized>(dim: usize, len: usize, noise: f64, rng: &mut R) -> FeatureSequence {
    let s = silence_vector(dim);
    let data = (0..len * dim).map(|k| s[k % dim] + noise * gaussian(rng)).collect();
    FeatureSequence::from_flat(data, dim, 0.01, 0.025)
}

#[derive(Debug, Clone)]
pub struct LabeledSegment {
    pub template: usize,
    pub features: FeatureSequence,
}

/// `instances` noisy renderings of each template with lengths in `len_range`.
pub fn cvc_segments(
    templates: &[CvcTemplate],
    instances: usize,
    len_range: (usize, usize),
    noise: f64,
    seed: u64,
) -> Vec<LabeledSegment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (j, t) in templates.iter().enumerate() {
        for _ in 0..instances {
            let len = rng.random_range(len_range.0..=len_range.1);
            out.push(LabeledSegment { template: j, features: render_cvc(t, len, noise, &mut rng) });
        }
    }
    out
}

/// A continuous feature stream with its ground-truth syllables.
#[derive(Debug, Clone)]
pub struct StreamUtterance {
    pub features: FeatureSequence,
    /// `(template, start_frame, end_frame)`.
    pub syllables: Vec<(usize, usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct StreamSpec {
    pub utterances: usize,
    pub syllables_per_utterance: (usize, usize),
    pub syllable_len: (usize, usize),
    pub gap_len: (usize, usize),
    pub noise: f64,
    pub silence_noise: f64,
    pub seed: u64,
}

impl Default for StreamSpec {
    fn default() -> Self {
        Self {
            utterances: 10,
            syllables_per_utterance: (3, 6),
            syllable_len: (18, 26),
            gap_len: (5, 12),
            noise: 0.5,
            silence_noise: 0.1,
            seed: 0,
        }
    }
}

/// Templates concatenated with silence gaps, beginning and ending in silence.
pub fn continuous_streams(templates: &[CvcTemplate], spec: &StreamSpec) -> Vec<StreamUtterance> {
    let dim = templates[0].vowel.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.utterances)
        .map(|_| {
            let mut data = Vec::new();
            let mut syllables = Vec::new();
            let n = rng.random_range(spec.syllables_per_utterance.0..=spec.syllables_per_utterance.1);
            let push_gap = |data: &mut Vec<f64>, rng: &mut ChaCha8Rng| {
                let g = rng.random_range(spec.gap_len.0..=spec.gap_len.1);
                data.extend_from_slice(render_silence(dim, g, spec.silence_noise, rng).as_flat());
            };
            push_gap(&mut data, &mut rng);
            for _ in 0..n {
                let j = rng.random_range(0..templates.len());
                let len = rng.random_range(spec.syllable_len.0..=spec.syllable_len.1);
                let start = data.len() / dim;
                data.extend_from_slice(render_cvc(&templates[j], len, spec.noise, &mut rng).as_flat());
                syllables.push((j, start, start + len));
                push_gap(&mut data, &mut rng);
            }
            StreamUtterance { features: FeatureSequence::from_flat(data, dim, 0.01, 0.025), syllables }
        })
        .collect()
}

/// Acoustic description of a synthetic CVC syllable.
#[derive(Debug, Clone, PartialEq)]
pub struct SyllableTemplate {
    pub f0: f64,
    pub formants: [f64; 2],
    /// One-pole coefficient of the onset noise; negative values brighten it.
    pub onset_tilt: f64,
    pub coda_tilt: f64,
}

/// Fixed table of acoustically distinct syllables; `n` is capped at its length.
pub fn syllable_templates(n: usize) -> Vec<SyllableTemplate> {
    let table = [
        SyllableTemplate { f0: 120.0, formants: [300.0, 2300.0], onset_tilt: -0.9, coda_tilt: 0.9 },
        SyllableTemplate { f0: 120.0, formants: [750.0, 1200.0], onset_tilt: 0.9, coda_tilt: -0.9 },
        SyllableTemplate { f0: 120.0, formants: [350.0, 800.0], onset_tilt: 0.0, coda_tilt: 0.5 },
        SyllableTemplate { f0: 120.0, formants: [550.0, 1800.0], onset_tilt: -0.5, coda_tilt: 0.0 },
        SyllableTemplate { f0: 120.0, formants: [650.0, 2800.0], onset_tilt: 0.5, coda_tilt: -0.5 },
        SyllableTemplate { f0: 120.0, formants: [450.0, 1000.0], onset_tilt: 0.95, coda_tilt: 0.95 },
    ];
    table.into_iter().take(n).collect()
}

fn tilted_noise<R: Rng + ?Sized>(n: usize, tilt: f64, rng: &mut R) -> Vec<f64> {
    let mut y = 0.0;
    let mut out: Vec<f64> = (0..n)
        .map(|_| {
            y = rng.random_range(-1.0..1.0) + tilt * y;
            y
        })
        .collect();
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    out.iter_mut().for_each(|v| *v /= peak);
    out
}

/// Renders one syllable of `duration_s`: a noise onset overlapping a rising
/// vowel, a steady vowel, then a falling vowel under a noise coda. Pitch and
/// formants are jittered by up to ±3%.
pub fn render_syllable<R: Rng + ?Sized>(t: &SyllableTemplate, duration_s: f64, sr: u32, rng: &mut R) -> Vec<f64> {
    let n = (duration_s * sr as f64).round() as usize;
    let jitter = |rng: &mut R| 1.0 + rng.random_range(-0.03..0.03);
    let f0 = t.f0 * jitter(rng);
    let formants = [t.formants[0] * jitter(rng), t.formants[1] * jitter(rng)];
    let nyq = sr as f64 / 2.0;
    let harmonics: Vec<(f64, f64, f64)> = (1..)
        .map(|h| h as f64 * f0)
        .take_while(|f| *f < 0.9 * nyq)
        .map(|f| {
            let a: f64 = formants.iter().map(|fk| 1.0 / (1.0 + ((f - fk) / 80.0).powi(2))).sum();
            (f, a, rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    let norm: f64 = harmonics.iter().map(|h| h.1).sum::<f64>().max(1e-12);
    let n_on = (n as f64 * TRANSITION_FRACTION) as usize;
    let n_off = n_on;
    let onset = tilted_noise(n_on, t.onset_tilt, rng);
    let coda = tilted_noise(n_off, t.coda_tilt, rng);
    (0..n)
        .map(|i| {
            let time = i as f64 / sr as f64;
            let vowel: f64 = harmonics.iter().map(|(f, a, ph)| a * (2.0 * PI * f * time + ph).sin()).sum::<f64>() / norm;
            let (venv, noise) = if i < n_on {
                let a = i as f64 / n_on as f64;
                (a, 0.3 * (1.0 - a) * onset[i])
            } else if i >= n - n_off {
                let k = i - (n - n_off);
                let a = k as f64 / n_off as f64;
                (1.0 - a, 0.25 * (1.0 - (2.0 * a - 1.0).abs()) * coda[k])
            } else {
                (1.0, 0.0)
            };
            0.5 * venv * vowel + noise
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct AudioCorpusSpec {
    pub templates: usize,
    pub utterances: usize,
    pub syllables_per_utterance: (usize, usize),
    pub syllable_duration: (f64, f64),
    pub gap: (f64, f64),
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for AudioCorpusSpec {
    fn default() -> Self {
        Self {
            templates: 3,
            utterances: 12,
            syllables_per_utterance: (3, 5),
            syllable_duration: (0.18, 0.26),
            gap: (0.10, 0.20),
            sample_rate: 16000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyllableMark {
    pub template: usize,
    pub start_sample: usize,
    pub end_sample: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticUtterance {
    pub id: String,
    pub waveform: Waveform,
    pub syllables: Vec<SyllableMark>,
}

/// Utterances of synthetic syllables separated by digital silence.
pub fn audio_corpus(spec: &AudioCorpusSpec) -> Vec<SyntheticUtterance> {
    let templates = syllable_templates(spec.templates);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sr = spec.sample_rate;
    (0..spec.utterances)
        .map(|u| {
            let mut samples = Vec::new();
            let mut syllables = Vec::new();
            let gap = |rng: &mut ChaCha8Rng| {
                vec![0.0; (rng.random_range(spec.gap.0..=spec.gap.1) * sr as f64).round() as usize]
            };
            samples.extend(gap(&mut rng));
            let n = rng.random_range(spec.syllables_per_utterance.0..=spec.syllables_per_utterance.1);
            for _ in 0..n {
                let j = rng.random_range(0..templates.len());
                let dur = rng.random_range(spec.syllable_duration.0..=spec.syllable_duration.1);
                let start = samples.len();
                samples.extend(render_syllable(&templates[j], dur, sr, &mut rng));
                syllables.push(SyllableMark { template: j, start_sample: start, end_sample: samples.len() });
                samples.extend(gap(&mut rng));
            }
            SyntheticUtterance {
                id: format!("utt{u:03}"),
                waveform: Waveform::new(samples, sr).expect("finite samples"),
                syllables,
            }
        })
        .collect()
}
