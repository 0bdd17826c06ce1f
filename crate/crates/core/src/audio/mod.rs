//! Audio container, WAV I/O, STFT/ISTFT and log-mel features.
//!
//! Every pipeline signal (noisy input, separated speech, noise track,
//! suppressed speech, edited speech, final mix) is carried as a [`Waveform`].

mod matrix;
mod mel;
mod stft;
mod wav;

pub use matrix::{read_matrix, write_matrix, MatrixFile};
pub use mel::{hz_to_mel, mel_filterbank, mel_spectrogram, mel_to_hz, MelSpectrogram, LOG_FLOOR};
pub use stft::{hann_window, istft, one_sided_energy, stft, Spectrogram};
pub use wav::{read_wav, write_wav, WavEncoding};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt WAV header: {0}")]
    CorruptHeader(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("signal too short: {len} samples, need at least {needed}")]
    SignalTooShort { len: usize, needed: usize },
    #[error("invalid hop length {hop} for frame length {frame}")]
    InvalidHop { frame: usize, hop: usize },
    #[error("frame length {0} must be a power of two")]
    InvalidFrameLength(usize),
    #[error("invalid mel band range: {0}")]
    InvalidBandRange(String),
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error("malformed matrix file: {0}")]
    MalformedMatrix(String),
}

pub type Result<T, E = AudioError> = std::result::Result<T, E>;

/// A mono sampled signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        let w = Self { samples, sample_rate };
        w.validate()?;
        Ok(w)
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self { samples: vec![0.0; len], sample_rate }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(AudioError::InvalidWaveform("sample rate must be positive".into()));
        }
        if let Some(i) = self.samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::InvalidWaveform(format!("non-finite sample at index {i}")));
        }
        Ok(())
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

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    /// Number of samples spanned by `ms` milliseconds, rounded to nearest.
    pub fn ms_to_samples(&self, ms: f64) -> usize {
        (ms * self.sample_rate as f64 / 1000.0).round().max(0.0) as usize
    }

    /// Rounds every sample to single precision, the precision of float32 artifacts.
    pub fn to_f32_precision(&self) -> Self {
        Self {
            samples: self.samples.iter().map(|&s| s as f32 as f64).collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self { samples: self.samples[start..end].to_vec(), sample_rate: self.sample_rate }
    }
}

/// STFT analysis geometry shared by spectrogram, embedding and metric code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FrameGeometry {
    pub frame_length: usize,
    pub hop_length: usize,
}

impl Default for FrameGeometry {
    fn default() -> Self {
        Self { frame_length: 1024, hop_length: 256 }
    }
}

impl FrameGeometry {
    pub fn new(frame_length: usize, hop_length: usize) -> Self {
        Self { frame_length, hop_length }
    }

    /// Frame count under the tail policy: the last partial frame is zero-padded.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.frame_length {
            return 0;
        }
        1 + (len - self.frame_length).div_ceil(self.hop_length)
    }

    /// Signal length after tail padding.
    pub fn padded_len(&self, len: usize) -> usize {
        match self.frame_count(len) {
            0 => len,
            n => self.frame_length + (n - 1) * self.hop_length,
        }
    }
}
