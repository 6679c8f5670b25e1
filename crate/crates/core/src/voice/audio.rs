use std::io::Cursor;
use std::path::Path;

use super::VoiceError;

/// Mono audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, VoiceError> {
        if samples.is_empty() {
            return Err(VoiceError::InvalidAudio("empty signal".into()));
        }
        if sample_rate == 0 {
            return Err(VoiceError::InvalidAudio("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(VoiceError::InvalidAudio("samples must be finite and within [-1, 1]".into()));
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

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Decodes 16-bit PCM mono WAV.
    pub fn from_wav_bytes(bytes: &[u8]) -> Result<Self, VoiceError> {
        let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(wav_error)?;
        let spec = reader.spec();
        if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
            return Err(VoiceError::UnsupportedFormat(format!(
                "{} channel(s), {}-bit {:?}",
                spec.channels, spec.bits_per_sample, spec.sample_format
            )));
        }
        let samples = reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<Vec<_>, _>>()
            .map_err(wav_error)?;
        Self::new(samples, spec.sample_rate)
    }

    pub fn from_wav_file(path: &Path) -> Result<Self, VoiceError> {
        Self::from_wav_bytes(&std::fs::read(path)?)
    }

    /// Encodes as 16-bit PCM mono WAV (samples scaled by 32767 and rounded).
    pub fn to_wav_bytes(&self) -> Vec<u8> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut out = Cursor::new(Vec::new());
        {
            let mut writer = hound::WavWriter::new(&mut out, spec).expect("in-memory WAV writer");
            for s in &self.samples {
                writer.write_sample((s * 32767.0).round() as i16).expect("in-memory WAV write");
            }
            writer.finalize().expect("in-memory WAV finalize");
        }
        out.into_inner()
    }
}

fn wav_error(e: hound::Error) -> VoiceError {
    match e {
        hound::Error::Unsupported => VoiceError::UnsupportedFormat("unsupported WAV encoding".into()),
        hound::Error::IoError(io) => VoiceError::Io(io),
        other => VoiceError::UnsupportedFormat(other.to_string()),
    }
}
