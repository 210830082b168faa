//! Mono 16-bit PCM WAV reading and writing.

use std::path::Path;

use thiserror::Error;

use super::{Label, Recording, Source};

#[derive(Debug, Error)]
pub enum WavError {
    #[error("malformed wav header: {0}")]
    Malformed(String),
    #[error("unsupported channel count {0}")]
    UnsupportedChannels(u16),
    #[error("unsupported bit depth {0}")]
    UnsupportedBitDepth(u16),
    #[error("unsupported sample format: float")]
    FloatSamples,
    #[error("wav file contains no samples")]
    Empty,
    #[error("wav io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<hound::Error> for WavError {
    fn from(e: hound::Error) -> Self {
        match e {
            hound::Error::IoError(io) => WavError::Io(io),
            other => WavError::Malformed(other.to_string()),
        }
    }
}

/// Read a mono PCM16 WAV file. Samples are scaled by 1/32768; the label is
/// [`Label::Unlabeled`] and the id is the file stem.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Recording, WavError> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(WavError::UnsupportedChannels(spec.channels));
    }
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(WavError::FloatSamples);
    }
    if spec.bits_per_sample != 16 {
        return Err(WavError::UnsupportedBitDepth(spec.bits_per_sample));
    }
    if spec.sample_rate == 0 {
        return Err(WavError::Malformed("sample rate is zero".into()));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<Result<Vec<_>, _>>()?;
    if samples.is_empty() {
        return Err(WavError::Empty);
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Recording {
        id,
        samples,
        sample_rate_hz: spec.sample_rate,
        label: Label::Unlabeled,
        source: Source::Real,
    })
}

/// Write samples as mono PCM16, rounding `x · 32768` and saturating.
pub fn write_wav(path: impl AsRef<Path>, samples: &[f64], sample_rate_hz: u32) -> Result<(), WavError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &x in samples {
        w.write_sample(quantize(x))?;
    }
    w.finalize()?;
    Ok(())
}

pub fn quantize(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}
