use super::{frame_count, FrontendConfig, FrontendError, Waveform};

/// Smoothed per-frame log energy on the MFCC frame grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyContour {
    /// Floored then moving-average smoothed log energy, dB re full scale.
    pub values: Vec<f64>,
    /// Floored but unsmoothed log energy; used to trim segment edges.
    pub raw: Vec<f64>,
    pub floor: f64,
    pub frame_shift: f64,
}

impl EnergyContour {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Adds `delta` dB to every value and to the floor.
    pub fn shifted(&self, delta: f64) -> EnergyContour {
        EnergyContour {
            values: self.values.iter().map(|v| v + delta).collect(),
            raw: self.raw.iter().map(|v| v + delta).collect(),
            floor: self.floor + delta,
            frame_shift: self.frame_shift,
        }
    }
}

/// Unfloored `10 log10(mean square)` per frame; digital silence gives `-inf`.
pub fn raw_log_energy(w: &Waveform, cfg: &FrontendConfig) -> Result<Vec<f64>, FrontendError> {
    cfg.validate()?;
    let (len, shift) = cfg.frame_geometry(w.sample_rate());
    let n = frame_count(w.len(), len, shift);
    if n == 0 {
        return Err(FrontendError::TooShort { samples: w.len(), frame_len: len });
    }
    let s = w.samples();
    Ok((0..n)
        .map(|t| {
            let ms = s[t * shift..t * shift + len].iter().map(|x| x * x).sum::<f64>() / len as f64;
            10.0 * ms.log10()
        })
        .collect())
}

pub fn compute_energy_contour(w: &Waveform, cfg: &FrontendConfig) -> Result<EnergyContour, FrontendError> {
    let raw: Vec<f64> = raw_log_energy(w, cfg)?
        .into_iter()
        .map(|e| if e.is_nan() { cfg.energy_floor } else { e.max(cfg.energy_floor) })
        .collect();
    let half = ((cfg.energy_smooth_win / cfg.frame_shift).round() as usize) / 2;
    let values = moving_average(&raw, half, cfg.energy_floor);
    Ok(EnergyContour { values, raw, floor: cfg.energy_floor, frame_shift: cfg.frame_shift })
}

/// Centered moving average over `2*half + 1` frames, shrinking at the edges.
/// Inputs are all `>= floor`; the clamp absorbs rounding in the mean.
fn moving_average(x: &[f64], half: usize, floor: f64) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half + 1).min(n);
            (x[lo..hi].iter().sum::<f64>() / (hi - lo) as f64).max(floor)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::synthetic::white_noise;

    /// Independent peak picker: strict local maxima (plateaus count once) that rise at
    /// least `prominence` dB above the deeper of the two bounding minima and sit above `level`.
    fn count_prominent_peaks(x: &[f64], level: f64, prominence: f64) -> usize {
        let n = x.len();
        let mut count = 0;
        let mut t = 0;
        while t < n {
            let mut end = t;
            while end + 1 < n && x[end + 1] == x[t] {
                end += 1;
            }
            let left_lower = t == 0 || x[t - 1] < x[t];
            let right_lower = end + 1 == n || x[end + 1] < x[t];
            if left_lower && right_lower && x[t] > level {
                // Walk outward until a higher sample or the edge; track minima.
                let mut lmin = x[t];
                let mut i = t;
                while i > 0 && x[i - 1] <= x[t] {
                    i -= 1;
                    lmin = lmin.min(x[i]);
                }
                let mut rmin = x[t];
                let mut j = end;
                while j + 1 < n && x[j + 1] <= x[t] {
                    j += 1;
                    rmin = rmin.min(x[j]);
                }
                let prom = x[t] - lmin.max(rmin);
                if prom >= prominence || (i == 0 && j + 1 == n) {
                    count += 1;
                }
            }
            t = end + 1;
        }
        count
    }

    #[test]
    fn silence_sits_on_floor() {
        let cfg = FrontendConfig::default();
        let w = Waveform::new(vec![0.0; 16000], 16000).unwrap();
        let e = compute_energy_contour(&w, &cfg).unwrap();
        assert_eq!(e.len(), 98);
        assert!(e.values.iter().all(|&v| v == cfg.energy_floor));
    }

    #[test]
    fn modulated_noise_has_four_peaks() {
        let sr = 16000;
        let noise = white_noise(sr as usize, 0.5, 42);
        let s: Vec<f64> = noise
            .iter()
            .enumerate()
            .map(|(i, v)| v * (2.0 * PI * 2.0 * i as f64 / sr as f64).sin().abs())
            .collect();
        let cfg = FrontendConfig::default();
        let e = compute_energy_contour(&Waveform::new(s, sr).unwrap(), &cfg).unwrap();
        assert_eq!(count_prominent_peaks(&e.values, cfg.energy_floor + 6.0, 3.0), 4);
    }

    #[test]
    fn single_tone_burst_has_one_peak() {
        let sr = 16000;
        let mut s = vec![0.0; sr as usize];
        let burst = (0.1 * sr as f64) as usize;
        let start = 6000;
        for i in 0..burst {
            let env = 0.5 - 0.5 * (2.0 * PI * i as f64 / (burst - 1) as f64).cos();
            s[start + i] = 0.5 * env * (2.0 * PI * 500.0 * i as f64 / sr as f64).sin();
        }
        let cfg = FrontendConfig::default();
        let e = compute_energy_contour(&Waveform::new(s, sr).unwrap(), &cfg).unwrap();
        assert_eq!(count_prominent_peaks(&e.values, cfg.energy_floor + 6.0, 0.0), 1);
    }

    #[test]
    fn contour_matches_mfcc_grid_and_floor() {
        let cfg = FrontendConfig::default();
        let w = Waveform::new(white_noise(12345, 0.1, 1), 16000).unwrap();
        let e = compute_energy_contour(&w, &cfg).unwrap();
        let f = super::super::compute_mfcc(&w, &cfg).unwrap();
        assert_eq!(e.len(), f.num_frames());
        assert!(e.values.iter().all(|&v| v >= cfg.energy_floor));
    }

    #[test]
    fn scaling_shifts_raw_energy_uniformly() {
        let cfg = FrontendConfig::default();
        let base = white_noise(8000, 0.3, 2);
        let c: f64 = 3.0;
        let a = raw_log_energy(&Waveform::new(base.clone(), 16000).unwrap(), &cfg).unwrap();
        let b = raw_log_energy(
            &Waveform::new(base.iter().map(|v| v * c).collect(), 16000).unwrap(),
            &cfg,
        )
        .unwrap();
        // 2 log(c) in natural-log units is 20 log10(c) in dB.
        let expected = 20.0 * c.log10();
        for (x, y) in a.iter().zip(&b) {
            assert!((y - x - expected).abs() < 1e-9);
        }
    }
}
