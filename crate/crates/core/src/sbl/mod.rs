//! Frequency-band-aware noise suppression.
//!
//! Residual noise in separated speech is removed in two steps: frame-wise
//! sparse Bayesian recovery of the voice component over an overcomplete
//! dictionary, then zero-phase IIR filtering of the reconstruction.

mod dictionary;
mod filter;
mod solver;
mod suppress;

pub use dictionary::{build_dictionary, Dictionary, DictionaryKind};
pub use filter::{butterworth_response, filtfilt, lfilter, IirFilter, PRINTED_A, PRINTED_B};
pub use solver::{sbl_iterate, sbl_solve, SblConfig, SblProblem, SblSolution, SblState};
pub use suppress::{suppress, suppress_with, SuppressConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SblError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("singular system after jitter at iteration {iteration}")]
    SingularSystem { iteration: usize },
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("signal too short: {len} samples, need more than {needed}")]
    SignalTooShort { len: usize, needed: usize },
    #[error(transparent)]
    Audio(#[from] crate::audio::AudioError),
}

pub type Result<T, E = SblError> = std::result::Result<T, E>;
