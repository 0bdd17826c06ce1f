use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{RefineError, Result};
use crate::analysis::AnalysisGeometry;
use crate::audio::{istft, mel_filterbank, mel_spectrogram, stft, AudioError, FrameGeometry, Waveform};

pub const DEFAULT_D_MODEL: usize = 128;
pub const DEFAULT_HEADS: usize = 8;
pub const EMBEDDING_SEED: u64 = 0x5eed_e3b0;
/// Largest per-bin amplitude change the decoder applies, in dB.
pub const GAIN_CLAMP_DB: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    FromXs,
    FromXl,
    FromXle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameEmbedding {
    /// `frames × d_model`.
    pub vectors: DMatrix<f64>,
    pub source: EmbeddingSource,
    pub geometry: FrameGeometry,
    pub sample_rate: u32,
    pub signal_length: usize,
}

impl FrameEmbedding {
    pub fn frames(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn d_model(&self) -> usize {
        self.vectors.ncols()
    }
}

/// Log-mel analysis followed by a fixed projection with orthonormal rows
/// (or columns, when `d_model` is smaller than the band count). The
/// projection's transpose is its pseudo-inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedder {
    pub analysis: AnalysisGeometry,
    /// `mel_bands × d_model`.
    pub projection: DMatrix<f64>,
}

impl Default for Embedder {
    fn default() -> Self {
        Self::new(AnalysisGeometry::default(), DEFAULT_D_MODEL, EMBEDDING_SEED)
    }
}

impl Embedder {
    pub fn new(analysis: AnalysisGeometry, d_model: usize, seed: u64) -> Self {
        let bands = analysis.mel_bands;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (tall, wide) = (bands.max(d_model), bands.min(d_model));
        let gaussian = DMatrix::from_fn(tall, wide, |_, _| StandardNormal.sample(&mut rng));
        let q = gaussian.qr().q();
        let projection = if d_model >= bands { q.transpose() } else { q };
        Self { analysis, projection }
    }

    pub fn d_model(&self) -> usize {
        self.projection.ncols()
    }

    fn log_mel_matrix(&self, w: &Waveform) -> Result<DMatrix<f64>> {
        let min = self.analysis.frame_length;
        if w.len() < min {
            return Err(RefineError::Audio(AudioError::SignalTooShort { len: w.len(), needed: min }));
        }
        let mel = self.analysis.log_mel(w).map_err(RefineError::from_analysis)?;
        let bands = self.analysis.mel_bands;
        Ok(DMatrix::from_fn(mel.len(), bands, |r, c| mel[r][c]))
    }

    pub fn embed(&self, w: &Waveform, source: EmbeddingSource) -> Result<FrameEmbedding> {
        let mel = self.log_mel_matrix(w)?;
        Ok(FrameEmbedding {
            vectors: mel * &self.projection,
            source,
            geometry: self.analysis.frames(),
            sample_rate: w.sample_rate,
            signal_length: w.len(),
        })
    }

    /// Applies the refined embedding to `reference` as a bounded spectral
    /// gain. The log-mel change is the embedding difference mapped back
    /// through the pseudo-inverse projection, interpolated onto STFT bins
    /// with the mel filter weights, and clamped to ±12 dB of amplitude.
    /// Unit gains return `reference` unchanged.
    pub fn reconstruct(&self, refined: &FrameEmbedding, reference: &Waveform) -> Result<Waveform> {
        let geometry = self.analysis.frames();
        let frames = geometry.frame_count(reference.len());
        if refined.geometry != geometry || refined.frames() != frames || refined.sample_rate != reference.sample_rate {
            return Err(RefineError::GeometryMismatch(format!(
                "refined embedding has {} frames at {:?}/{} Hz, reference needs {} frames at {:?}/{} Hz",
                refined.frames(),
                refined.geometry,
                refined.sample_rate,
                frames,
                geometry,
                reference.sample_rate
            )));
        }
        if refined.d_model() != self.d_model() {
            return Err(RefineError::DimensionMismatch(format!(
                "refined embedding has d_model {}, embedder has {}",
                refined.d_model(),
                self.d_model()
            )));
        }
        let original = stft(reference, geometry.frame_length, geometry.hop_length)?;
        let mut spec = original.clone();
        let base = mel_spectrogram(&spec, self.analysis.mel_bands, self.analysis.fmin, self.analysis.fmax_for(reference.sample_rate))?;
        let base = DMatrix::from_fn(frames, self.analysis.mel_bands, |r, c| base.log_energies[r][c]);
        let delta = (&refined.vectors - base * &self.projection) * self.projection.transpose();

        let limit = GAIN_CLAMP_DB * std::f64::consts::LN_10 / 20.0;
        let fb = mel_filterbank(
            self.analysis.mel_bands,
            self.analysis.fmin,
            self.analysis.fmax_for(reference.sample_rate),
            geometry.frame_length,
            reference.sample_rate,
        )?;
        let interp = BinInterpolation::new(&fb);
        for (f, mags) in spec.magnitudes.iter_mut().enumerate() {
            // Natural-log power change to natural-log amplitude change.
            let band_gain: Vec<f64> = (0..self.analysis.mel_bands).map(|b| (delta[(f, b)] / 2.0).clamp(-limit, limit)).collect();
            for (k, m) in mags.iter_mut().enumerate() {
                *m *= interp.at(k, &band_gain).exp();
            }
        }
        // Adding the change as a difference keeps samples no frame covers.
        let (before, after) = (istft(&original)?, istft(&spec)?);
        let samples = reference.samples.iter().zip(&before.samples).zip(&after.samples).map(|((r, b), a)| r + (a - b)).collect();
        Ok(Waveform { samples, sample_rate: reference.sample_rate })
    }
}

/// Maps per-band values onto bins as filter-weighted averages; bins outside
/// every filter take the value of the nearest covered bin.
struct BinInterpolation {
    weights: Vec<Vec<(usize, f64)>>,
    nearest: Vec<usize>,
}

impl BinInterpolation {
    fn new(fb: &[Vec<f64>]) -> Self {
        let bins = fb.first().map_or(0, Vec::len);
        let weights: Vec<Vec<(usize, f64)>> = (0..bins)
            .map(|k| {
                let col: Vec<(usize, f64)> = fb.iter().enumerate().filter(|(_, row)| row[k] > 0.0).map(|(b, row)| (b, row[k])).collect();
                let total: f64 = col.iter().map(|c| c.1).sum();
                col.into_iter().map(|(b, w)| (b, w / total)).collect()
            })
            .collect();
        let covered: Vec<usize> = (0..bins).filter(|&k| !weights[k].is_empty()).collect();
        let nearest = (0..bins)
            .map(|k| covered.iter().copied().min_by_key(|&c| c.abs_diff(k)).unwrap_or(k))
            .collect();
        Self { weights, nearest }
    }

    fn at(&self, bin: usize, band_values: &[f64]) -> f64 {
        self.weights[self.nearest[bin]].iter().map(|&(b, w)| w * band_values[b]).sum()
    }
}
