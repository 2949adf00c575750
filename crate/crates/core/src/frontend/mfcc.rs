use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{frame_count, CmvnMode, FeatureSequence, FrontendConfig, FrontendError, Waveform};

/// Floor applied to mel filter energies before the log.
const MEL_ENERGY_FLOOR: f64 = 1e-10;
const MEL_LOW_HZ: f64 = 20.0;
const DELTA_WINDOW: usize = 2;

fn hz_to_mel(hz: f64) -> f64 {
    1127.0 * (1.0 + hz / 700.0).ln()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * ((mel / 1127.0).exp() - 1.0)
}

/// Triangular filters on the HTK mel scale, as `(first_bin, weights)` pairs.
fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> Vec<(usize, Vec<f64>)> {
    let nyquist = sample_rate as f64 / 2.0;
    let bin_hz = sample_rate as f64 / n_fft as f64;
    let lo = hz_to_mel(MEL_LOW_HZ.min(nyquist / 2.0));
    let hi = hz_to_mel(nyquist);
    let centers: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let n_bins = n_fft / 2 + 1;
    (0..n_mels)
        .map(|m| {
            let (left, center, right) = (centers[m], centers[m + 1], centers[m + 2]);
            let weights: Vec<(usize, f64)> = (0..n_bins)
                .filter_map(|b| {
                    let f = b as f64 * bin_hz;
                    let w = if f > left && f <= center {
                        (f - left) / (center - left)
                    } else if f > center && f < right {
                        (right - f) / (right - center)
                    } else {
                        0.0
                    };
                    (w > 0.0).then_some((b, w))
                })
                .collect();
            let first = weights.first().map_or(0, |&(b, _)| b);
            (first, weights.into_iter().map(|(_, w)| w).collect())
        })
        .collect()
}

/// Orthonormal DCT-II basis, `n_out` rows of length `n_in`.
fn dct_matrix(n_out: usize, n_in: usize) -> Vec<Vec<f64>> {
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n_in as f64).sqrt() } else { (2.0 / n_in as f64).sqrt() };
            (0..n_in)
                .map(|m| scale * (PI * k as f64 * (m as f64 + 0.5) / n_in as f64).cos())
                .collect()
        })
        .collect()
}

fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()).collect()
}

/// MFCCs with optional first-order deltas and per-utterance normalization.
///
/// Pre-emphasis is applied within each frame, so a frame's coefficients depend
/// only on the samples under its window.
pub fn compute_mfcc(w: &Waveform, cfg: &FrontendConfig) -> Result<FeatureSequence, FrontendError> {
    cfg.validate()?;
    let (len, shift) = cfg.frame_geometry(w.sample_rate());
    let n_frames = frame_count(w.len(), len, shift);
    if n_frames == 0 {
        return Err(FrontendError::TooShort { samples: w.len(), frame_len: len });
    }
    let n_fft = len.next_power_of_two();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let window = hann(len);
    let bank = mel_filterbank(cfg.n_mels, n_fft, w.sample_rate());
    let dct = dct_matrix(cfg.n_cepstra, cfg.n_mels);

    let mut statics = Vec::with_capacity(n_frames * cfg.n_cepstra);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut log_mel = vec![0.0; cfg.n_mels];
    let samples = w.samples();
    for t in 0..n_frames {
        let frame = &samples[t * shift..t * shift + len];
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = if i < len {
                let prev = if i == 0 { frame[0] } else { frame[i - 1] };
                Complex::new((frame[i] - cfg.preemphasis * prev) * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (m, (first, weights)) in bank.iter().enumerate() {
            let e: f64 = weights
                .iter()
                .enumerate()
                .map(|(k, wgt)| wgt * buf[first + k].norm_sqr())
                .sum();
            log_mel[m] = e.max(MEL_ENERGY_FLOOR).ln();
        }
        for row in &dct {
            statics.push(row.iter().zip(&log_mel).map(|(a, b)| a * b).sum());
        }
    }

    let nc = cfg.n_cepstra;
    let dim = cfg.feature_dim();
    let mut data = Vec::with_capacity(n_frames * dim);
    let norm: f64 = 2.0 * (1..=DELTA_WINDOW).map(|n| (n * n) as f64).sum::<f64>();
    for t in 0..n_frames {
        data.extend_from_slice(&statics[t * nc..(t + 1) * nc]);
        if cfg.use_deltas {
            for c in 0..nc {
                let mut acc = 0.0;
                for n in 1..=DELTA_WINDOW {
                    let ahead = (t + n).min(n_frames - 1);
                    let behind = t.saturating_sub(n);
                    acc += n as f64 * (statics[ahead * nc + c] - statics[behind * nc + c]);
                }
                data.push(acc / norm);
            }
        }
    }

    apply_cmvn(&mut data, dim, cfg.cmvn);
    Ok(FeatureSequence::from_flat(data, dim, cfg.frame_shift, cfg.frame_len))
}

fn apply_cmvn(data: &mut [f64], dim: usize, mode: CmvnMode) {
    if mode == CmvnMode::Off {
        return;
    }
    let n = (data.len() / dim) as f64;
    for d in 0..dim {
        let mean = data.iter().skip(d).step_by(dim).sum::<f64>() / n;
        let var = data.iter().skip(d).step_by(dim).map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let scale = if mode == CmvnMode::MeanVariance && var > 1e-12 { 1.0 / var.sqrt() } else { 1.0 };
        for v in data.iter_mut().skip(d).step_by(dim) {
            *v = (*v - mean) * scale;
        }
    }
}
