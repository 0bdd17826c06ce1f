//! In-context refinement: cross-attention from edited speech frames onto
//! suppressed-speech frames, a bounded spectral-gain decoder, and
//! recombination with the separated noise.

mod attention;
mod embed;
mod recombine;
mod train;

use thiserror::Error;

use crate::analysis::{AnalysisError, AnalysisGeometry};
use crate::audio::{AudioError, Waveform};

pub use attention::{attention_head, attention_weights, multi_head_refine, softmax_rows, AttentionBlock};
pub use embed::{Embedder, EmbeddingSource, FrameEmbedding, DEFAULT_D_MODEL, DEFAULT_HEADS, EMBEDDING_SEED, GAIN_CLAMP_DB};
pub use recombine::{reconcile_noise, recombine, NOISE_SPLICE_FADE_MS};
pub use train::{
    loss, loss_and_gradient, train_on_examples, train_refiner, BlockGradient, TrainingExample, TrainingReport,
    TrainingSettings,
};

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("invalid attention block: {0}")]
    InvalidBlock(String),
    #[error("corrupt attention block file: {0}")]
    CorruptBlockFile(String),
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),
    #[error("speech has {speech} samples and noise has {noise}; an edit anchor is needed to reconcile them")]
    MissingAnchor { speech: usize, noise: usize },
    #[error("noise reconciliation failed: {0}")]
    Recombine(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("suppression failed while preparing training data: {0}")]
    Suppression(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl RefineError {
    fn from_analysis(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Audio(a) => RefineError::Audio(a),
            other => RefineError::GeometryMismatch(other.to_string()),
        }
    }
}

pub type Result<T, E = RefineError> = std::result::Result<T, E>;

/// Embeds with the default analysis geometry and projection seed.
pub fn embed(w: &Waveform, d_model: usize) -> Result<FrameEmbedding> {
    Embedder::new(AnalysisGeometry::default(), d_model, EMBEDDING_SEED).embed(w, EmbeddingSource::FromXs)
}

pub fn reconstruct(refined: &FrameEmbedding, reference: &Waveform) -> Result<Waveform> {
    Embedder::new(AnalysisGeometry::default(), refined.d_model(), EMBEDDING_SEED).reconstruct(refined, reference)
}
