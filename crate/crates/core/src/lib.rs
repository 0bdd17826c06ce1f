//! Noise-resilient speech editing toolkit.
//!
//! The pipeline separates a noisy recording into speech and noise, suppresses
//! residual noise in the speech with sparse Bayesian recovery followed by
//! zero-phase IIR filtering, edits a masked region, refines the edited speech
//! with multi-head cross-attention against the suppressed signal, and adds the
//! noise track back.

pub mod audio;
pub mod analysis;
pub mod cli;
pub mod edit;
pub mod exec;
pub mod external;
pub mod fixtures;
pub mod refine;
pub mod sbl;
pub mod pipeline;
pub mod separation;

pub use audio::{FrameGeometry, Waveform};
