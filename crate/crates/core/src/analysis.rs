//! Objective metrics: spectral centroid and bandwidth, SNR against a
//! reference, and a spectral-flux score for audible seams at edit junctions.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{mel_spectrogram, stft, AudioError, FrameGeometry, Spectrogram, Waveform};

pub const SNR_CAP_DB: f64 = 120.0;
pub const SILENT_FRAME_FLOOR: f64 = 1e-10;
pub const DEFAULT_BOUNDARY_WINDOW_MS: f64 = 150.0;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("length mismatch: test has {test} samples, reference has {reference}")]
    LengthMismatch { test: usize, reference: usize },
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),
    #[error("boundary {boundary} with a {window}-sample window does not fit in {len} samples")]
    BoundaryOutOfRange { boundary: usize, window: usize, len: usize },
    #[error(transparent)]
    Audio(#[from] AudioError),
}

pub type Result<T, E = AnalysisError> = std::result::Result<T, E>;

/// Mel settings shared by the embedding and the boundary score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisGeometry {
    pub frame_length: usize,
    pub hop_length: usize,
    pub mel_bands: usize,
    pub fmin: f64,
    /// `None` means the Nyquist frequency.
    pub fmax: Option<f64>,
}

impl Default for AnalysisGeometry {
    fn default() -> Self {
        Self { frame_length: 1024, hop_length: 256, mel_bands: 80, fmin: 0.0, fmax: None }
    }
}

impl AnalysisGeometry {
    pub fn frames(&self) -> FrameGeometry {
        FrameGeometry::new(self.frame_length, self.hop_length)
    }

    pub fn fmax_for(&self, sample_rate: u32) -> f64 {
        self.fmax.unwrap_or(sample_rate as f64 / 2.0)
    }

    pub fn log_mel(&self, w: &Waveform) -> Result<Vec<Vec<f64>>> {
        let s = stft(w, self.frame_length, self.hop_length)?;
        Ok(mel_spectrogram(&s, self.mel_bands, self.fmin, self.fmax_for(w.sample_rate))?.log_energies)
    }
}

fn frame_weights(s: &Spectrogram, f: usize) -> Option<f64> {
    let total: f64 = s.magnitudes[f].iter().sum();
    (total >= SILENT_FRAME_FLOOR).then_some(total)
}

pub fn spectral_centroid(s: &Spectrogram) -> Vec<f64> {
    (0..s.frames())
        .map(|f| match frame_weights(s, f) {
            None => 0.0,
            Some(total) => {
                let num: f64 = s.magnitudes[f].iter().enumerate().map(|(b, m)| s.bin_frequency(b) * m).sum();
                num / total
            }
        })
        .collect()
}

pub fn spectral_bandwidth(s: &Spectrogram) -> Vec<f64> {
    let centroids = spectral_centroid(s);
    (0..s.frames())
        .map(|f| match frame_weights(s, f) {
            None => 0.0,
            Some(total) => {
                let c = centroids[f];
                let num: f64 = s.magnitudes[f]
                    .iter()
                    .enumerate()
                    .map(|(b, m)| (s.bin_frequency(b) - c).powi(2) * m)
                    .sum();
                (num / total).sqrt()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralStats {
    pub centroid: Vec<f64>,
    pub bandwidth: Vec<f64>,
    /// Means over non-silent frames; 0 when every frame is silent.
    pub mean_centroid: f64,
    pub mean_bandwidth: f64,
}

impl SpectralStats {
    pub fn of(s: &Spectrogram) -> Self {
        let centroid = spectral_centroid(s);
        let bandwidth = spectral_bandwidth(s);
        let voiced: Vec<usize> = (0..s.frames()).filter(|&f| frame_weights(s, f).is_some()).collect();
        let mean = |v: &[f64]| {
            if voiced.is_empty() {
                0.0
            } else {
                voiced.iter().map(|&f| v[f]).sum::<f64>() / voiced.len() as f64
            }
        };
        Self { mean_centroid: mean(&centroid), mean_bandwidth: mean(&bandwidth), centroid, bandwidth }
    }
}

pub fn snr_db(test: &Waveform, reference: &Waveform) -> Result<f64> {
    if test.len() != reference.len() {
        return Err(AnalysisError::LengthMismatch { test: test.len(), reference: reference.len() });
    }
    if test.sample_rate != reference.sample_rate {
        return Err(AnalysisError::SampleRateMismatch(test.sample_rate, reference.sample_rate));
    }
    let signal: f64 = reference.samples.iter().map(|r| r * r).sum();
    let error: f64 = test.samples.iter().zip(&reference.samples).map(|(t, r)| (t - r).powi(2)).sum();
    if error == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    if signal == 0.0 {
        return Ok(-SNR_CAP_DB);
    }
    Ok((10.0 * (signal / error).log10()).clamp(-SNR_CAP_DB, SNR_CAP_DB))
}

/// Distance between the mean log-mel vectors of the windows on either side
/// of `boundary`, divided by the utterance's mean inter-frame flux.
pub fn boundary_discontinuity(w: &Waveform, boundary: usize, window_ms: f64, geometry: &AnalysisGeometry) -> Result<f64> {
    let window = w.ms_to_samples(window_ms);
    if boundary < window || boundary + window > w.len() || window < geometry.frame_length {
        return Err(AnalysisError::BoundaryOutOfRange { boundary, window, len: w.len() });
    }
    let mel = geometry.log_mel(w)?;
    let (n, hop) = (geometry.frame_length, geometry.hop_length);
    let mean_inside = |lo: usize, hi: usize| -> Vec<f64> {
        let frames: Vec<&Vec<f64>> =
            mel.iter().enumerate().filter(|(t, _)| t * hop >= lo && t * hop + n <= hi).map(|(_, v)| v).collect();
        let mut acc = vec![0.0; geometry.mel_bands];
        for v in &frames {
            for (a, x) in acc.iter_mut().zip(v.iter()) {
                *a += x;
            }
        }
        acc.iter().map(|a| a / frames.len() as f64).collect()
    };
    let left = mean_inside(boundary - window, boundary);
    let right = mean_inside(boundary, boundary + window);
    let distance = euclidean(&left, &right);
    let flux = if mel.len() < 2 {
        0.0
    } else {
        mel.windows(2).map(|p| euclidean(&p[0], &p[1])).sum::<f64>() / (mel.len() - 1) as f64
    };
    Ok(distance / flux.max(1e-9))
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub spectral: Option<SpectralStats>,
    pub snr_db: Option<f64>,
    /// Keyed by boundary sample index.
    pub boundary_discontinuity: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub config_hash: Option<String>,
    pub stages: BTreeMap<String, StageMetrics>,
}

impl MetricReport {
    /// Computes spectral statistics, the SNR against `reference` (when the
    /// lengths match) and boundary scores at `boundaries`.
    pub fn analyze_stage(
        &mut self,
        stage: &str,
        w: &Waveform,
        reference: Option<&Waveform>,
        boundaries: &[usize],
        geometry: &AnalysisGeometry,
    ) -> Result<()> {
        let mut m = StageMetrics::default();
        if w.len() >= geometry.frame_length {
            m.spectral = Some(SpectralStats::of(&stft(w, geometry.frame_length, geometry.hop_length)?));
        }
        if let Some(r) = reference.filter(|r| r.len() == w.len()) {
            m.snr_db = Some(snr_db(w, r)?);
        }
        for &b in boundaries {
            if let Ok(score) = boundary_discontinuity(w, b, DEFAULT_BOUNDARY_WINDOW_MS, geometry) {
                m.boundary_discontinuity.insert(b, score);
            }
        }
        self.stages.insert(stage.to_string(), m);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metric report serializes")
    }

    /// Flat rows of `stage,metric,frame_index,value`; utterance-level values
    /// leave `frame_index` empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,metric,frame_index,value\n");
        for (stage, m) in &self.stages {
            if let Some(s) = &m.spectral {
                let _ = writeln!(out, "{stage},mean_centroid_hz,,{}", s.mean_centroid);
                let _ = writeln!(out, "{stage},mean_bandwidth_hz,,{}", s.mean_bandwidth);
                for (i, v) in s.centroid.iter().enumerate() {
                    let _ = writeln!(out, "{stage},centroid_hz,{i},{v}");
                }
                for (i, v) in s.bandwidth.iter().enumerate() {
                    let _ = writeln!(out, "{stage},bandwidth_hz,{i},{v}");
                }
            }
            if let Some(v) = m.snr_db {
                let _ = writeln!(out, "{stage},snr_db,,{v}");
            }
            for (b, v) in &m.boundary_discontinuity {
                let _ = writeln!(out, "{stage},boundary_discontinuity@{b},,{v}");
            }
        }
        out
    }
}
