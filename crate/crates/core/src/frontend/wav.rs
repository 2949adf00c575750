use std::path::Path;

use super::{FrontendError, Waveform};

/// Sample encoding used when writing WAV files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Float32,
}

/// Reads a mono RIFF/WAVE file holding 16-bit integer or 32-bit float PCM.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform, FrontendError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let reader = hound::WavReader::open(path).map_err(|e| map_open_error(e, &shown))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(FrontendError::UnsupportedFormat(format!(
            "{shown}: {} channels, only mono is supported",
            spec.channels
        )));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| map_read_error(e, &shown))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()
            .map_err(|e| map_read_error(e, &shown))?,
        (fmt, bits) => {
            return Err(FrontendError::UnsupportedFormat(format!(
                "{shown}: {bits}-bit {fmt:?} samples"
            )))
        }
    };
    Waveform::new(samples, spec.sample_rate)
        .map_err(|e| FrontendError::CorruptFile(format!("{shown}: {e}")))
}

/// Writes a mono WAV file. `Pcm16` clamps to `[-1, 1]` before quantizing.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform, format: WavFormat) -> Result<(), FrontendError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => hound::SampleFormat::Int,
            WavFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let to_io = |e: hound::Error| match e {
        hound::Error::IoError(io) => FrontendError::Io(io),
        other => FrontendError::Io(std::io::Error::other(other.to_string())),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_io)?;
    for &s in w.samples() {
        match format {
            WavFormat::Pcm16 => {
                let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
                writer.write_sample(q).map_err(to_io)?;
            }
            WavFormat::Float32 => writer.write_sample(s as f32).map_err(to_io)?,
        }
    }
    writer.finalize().map_err(to_io)
}

fn map_open_error(e: hound::Error, path: &str) -> FrontendError {
    match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::NotFound => {
            FrontendError::NotFound(path.to_string())
        }
        hound::Error::Unsupported => FrontendError::UnsupportedFormat(format!("{path}: unsupported codec")),
        hound::Error::TooWide => FrontendError::UnsupportedFormat(format!("{path}: sample width")),
        other => FrontendError::CorruptFile(format!("{path}: {other}")),
    }
}

fn map_read_error(e: hound::Error, path: &str) -> FrontendError {
    match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            FrontendError::CorruptFile(format!("{path}: data chunk shorter than header claims"))
        }
        other => FrontendError::CorruptFile(format!("{path}: {other}")),
    }
}
