//! Audio ingestion and acoustic feature extraction.
//!
//! Everything here is a pure function of its inputs. Frames are laid out on a
//! common grid: frame `t` covers samples `[t*S, t*S + L)` where `L` and `S` are
//! the frame length and shift in samples, so the MFCC matrix and the energy
//! contour of one waveform always have the same number of rows.

mod energy;
mod matrix;
mod mfcc;
mod wav;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use energy::{compute_energy_contour, raw_log_energy, EnergyContour};
pub use matrix::{read_matrix, write_matrix, MatrixHeader, MATRIX_MAGIC};
pub use mfcc::compute_mfcc;
pub use wav::{read_wav, write_wav, WavFormat};

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("file not found: {0}")]
    NotFound(String),
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("waveform too short: {samples} samples, one frame needs {frame_len}")]
    TooShort { samples: usize, frame_len: usize },
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error("invalid frontend config: {0}")]
    InvalidConfig(String),
    #[error("sample rate mismatch: expected {expected} Hz, got {actual} Hz")]
    SampleRateMismatch { expected: u32, actual: u32 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl FrontendError {
    pub fn category(&self) -> &'static str {
        match self {
            FrontendError::NotFound(_) => "NotFound",
            FrontendError::UnsupportedFormat(_) => "UnsupportedFormat",
            FrontendError::CorruptFile(_) => "CorruptFile",
            FrontendError::TooShort { .. } => "TooShort",
            FrontendError::InvalidWaveform(_) => "InvalidWaveform",
            FrontendError::InvalidConfig(_) => "InvalidConfig",
            FrontendError::SampleRateMismatch { .. } => "SampleRateMismatch",
            FrontendError::Io(_) => "Io",
        }
    }
}

/// Mono PCM signal with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, FrontendError> {
        if sample_rate == 0 {
            return Err(FrontendError::InvalidWaveform("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(FrontendError::InvalidWaveform(format!("non-finite sample at {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Copy of samples `[start, end)`, clamped to the signal.
    pub fn slice(&self, start: usize, end: usize) -> Waveform {
        let end = end.min(self.samples.len());
        let start = start.min(end);
        Waveform { samples: self.samples[start..end].to_vec(), sample_rate: self.sample_rate }
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// Per-utterance cepstral normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CmvnMode {
    Off,
    /// Mean subtraction only.
    #[default]
    Mean,
    MeanVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontendConfig {
    /// Analysis window in seconds.
    pub frame_len: f64,
    /// Hop between frames in seconds.
    pub frame_shift: f64,
    pub n_mels: usize,
    pub n_cepstra: usize,
    pub preemphasis: f64,
    pub use_deltas: bool,
    pub cmvn: CmvnMode,
    /// Moving-average width for the energy contour, seconds.
    pub energy_smooth_win: f64,
    /// Log-energy floor in dB relative to full scale.
    pub energy_floor: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            frame_len: 0.025,
            frame_shift: 0.010,
            n_mels: 40,
            n_cepstra: 13,
            preemphasis: 0.97,
            use_deltas: true,
            cmvn: CmvnMode::Mean,
            energy_smooth_win: 0.050,
            energy_floor: -60.0,
        }
    }
}

impl FrontendConfig {
    pub fn validate(&self) -> Result<(), FrontendError> {
        if !(self.frame_shift > 0.0 && self.frame_shift <= self.frame_len) {
            return Err(FrontendError::InvalidConfig(format!(
                "need 0 < frame_shift <= frame_len, got shift {} len {}",
                self.frame_shift, self.frame_len
            )));
        }
        if self.n_cepstra == 0 || self.n_cepstra > self.n_mels {
            return Err(FrontendError::InvalidConfig(format!(
                "need 1 <= n_cepstra <= n_mels, got {} and {}",
                self.n_cepstra, self.n_mels
            )));
        }
        if !self.energy_floor.is_finite() || self.energy_smooth_win < 0.0 {
            return Err(FrontendError::InvalidConfig("bad energy parameters".into()));
        }
        Ok(())
    }

    /// Frame length and shift in samples at `sample_rate`.
    pub fn frame_geometry(&self, sample_rate: u32) -> (usize, usize) {
        let sr = sample_rate as f64;
        let len = ((self.frame_len * sr).round() as usize).max(1);
        let shift = ((self.frame_shift * sr).round() as usize).max(1);
        (len, shift)
    }

    pub fn feature_dim(&self) -> usize {
        self.n_cepstra * if self.use_deltas { 2 } else { 1 }
    }

    /// Sample span `[start, end)` covered by frames `[start_frame, end_frame)`.
    pub fn frame_span_samples(&self, sample_rate: u32, start_frame: usize, end_frame: usize) -> (usize, usize) {
        let (len, shift) = self.frame_geometry(sample_rate);
        if end_frame <= start_frame {
            return (start_frame * shift, start_frame * shift);
        }
        (start_frame * shift, (end_frame - 1) * shift + len)
    }
}

/// `floor((n - len) / shift) + 1`, or 0 when a single frame does not fit.
pub fn frame_count(n_samples: usize, frame_len: usize, frame_shift: usize) -> usize {
    if n_samples < frame_len {
        0
    } else {
        (n_samples - frame_len) / frame_shift + 1
    }
}

/// Row-major T x D matrix of feature frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    data: Vec<f64>,
    dim: usize,
    pub frame_shift: f64,
    pub frame_len: f64,
}

impl FeatureSequence {
    /// Panics if `dim == 0` or `data.len()` is not a multiple of `dim`.
    pub fn from_flat(data: Vec<f64>, dim: usize, frame_shift: f64, frame_len: f64) -> Self {
        assert!(dim > 0, "feature dimension must be positive");
        assert_eq!(data.len() % dim, 0, "data length must be a multiple of dim");
        Self { data, dim, frame_shift, frame_len }
    }

    /// Panics on ragged input or an empty frame.
    pub fn from_frames(frames: &[Vec<f64>], frame_shift: f64, frame_len: f64) -> Self {
        let dim = frames.first().map_or(1, Vec::len);
        let mut data = Vec::with_capacity(frames.len() * dim);
        for f in frames {
            assert_eq!(f.len(), dim, "ragged frames");
            data.extend_from_slice(f);
        }
        Self::from_flat(data, dim, frame_shift, frame_len)
    }

    pub fn num_frames(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Frames `[start, end)`; caller guarantees the range is valid.
    pub fn slice(&self, start: usize, end: usize) -> FeatureSequence {
        FeatureSequence {
            data: self.data[start * self.dim..end * self.dim].to_vec(),
            dim: self.dim,
            frame_shift: self.frame_shift,
            frame_len: self.frame_len,
        }
    }

    pub fn write_binary<W: std::io::Write>(&self, w: W) -> std::io::Result<()> {
        let header = MatrixHeader {
            rows: self.num_frames(),
            cols: self.dim,
            frame_shift: self.frame_shift,
            frame_len: self.frame_len,
        };
        write_matrix(w, &header, &self.data)
    }

    pub fn read_binary<R: std::io::Read>(r: R) -> Result<Self, FrontendError> {
        let (header, data) = read_matrix(r)?;
        if header.cols == 0 {
            return Err(FrontendError::CorruptFile("zero feature dimension".into()));
        }
        Ok(Self::from_flat(data, header.cols, header.frame_shift, header.frame_len))
    }

    /// One frame per line, comma-separated, preceded by a `t,c0,c1,...` header row.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for d in 0..self.dim {
            write!(w, ",c{d}")?;
        }
        writeln!(w)?;
        for (t, frame) in self.frames().enumerate() {
            write!(w, "{t}")?;
            for v in frame {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_matches_enumeration() {
        for n in 0..2000usize {
            for &(len, shift) in &[(400, 160), (7, 3), (5, 5), (1, 1)] {
                let mut brute = 0;
                let mut start = 0;
                while start + len <= n {
                    brute += 1;
                    start += shift;
                }
                assert_eq!(frame_count(n, len, shift), brute, "n={n} len={len} shift={shift}");
            }
        }
    }

    #[test]
    fn one_second_at_16k_gives_98_frames() {
        let cfg = FrontendConfig::default();
        let (len, shift) = cfg.frame_geometry(16000);
        assert_eq!((len, shift), (400, 160));
        assert_eq!(frame_count(16000, len, shift), 98);
    }

    #[test]
    fn config_rejects_shift_longer_than_frame() {
        let cfg = FrontendConfig { frame_shift: 0.03, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = FrontendConfig { n_cepstra: 41, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn waveform_rejects_nan() {
        assert!(Waveform::new(vec![0.0, f64::NAN], 16000).is_err());
        assert!(Waveform::new(vec![0.0], 0).is_err());
    }

    #[test]
    fn binary_and_csv_export() {
        let f = FeatureSequence::from_frames(&[vec![1.0, 2.0], vec![3.0, -4.5]], 0.01, 0.025);
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], MATRIX_MAGIC);
        let back = FeatureSequence::read_binary(&buf[..]).unwrap();
        assert_eq!(back, f);

        let mut csv = Vec::new();
        f.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "t,c0,c1\n0,1,2\n1,3,-4.5\n");
    }

    #[test]
    fn frame_span_samples_covers_windows() {
        let cfg = FrontendConfig::default();
        assert_eq!(cfg.frame_span_samples(16000, 0, 1), (0, 400));
        assert_eq!(cfg.frame_span_samples(16000, 2, 5), (320, 4 * 160 + 400));
    }
}
