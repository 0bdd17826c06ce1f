//! End-to-end orchestration: separate, suppress, edit twice, refine,
//! recombine and analyze, persisting every intermediate signal.

mod config;
mod run;

use std::fmt;

pub use config::{
    BackendSection, ConfigFile, FilterSection, KvSource, OutputSection, PipelineConfig, RefineSection, SuppressSection,
    CONFIG_ENV,
};
pub use run::{
    edit_boundaries, edit_training_example, persist, refine_stage, run_batch, run_pipeline, BatchItem, Manifest, ManifestEntry,
    PipelineArtifacts, ARTIFACT_NAMES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Input,
    Separate,
    Suppress,
    Edit,
    Refine,
    Recombine,
    Analyze,
    Persist,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Config => "config",
            Stage::Input => "input",
            Stage::Separate => "separate",
            Stage::Suppress => "suppress",
            Stage::Edit => "edit",
            Stage::Refine => "refine",
            Stage::Recombine => "recombine",
            Stage::Analyze => "analyze",
            Stage::Persist => "persist",
        };
        f.write_str(name)
    }
}

/// A failure attributed to the stage that raised it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, message: impl Into<String>) -> Self {
        Self { stage, message: message.into() }
    }

    pub(crate) fn at<E: fmt::Display>(stage: Stage) -> impl Fn(E) -> Self {
        move |e| Self::new(stage, e.to_string())
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.message)
    }
}

impl std::error::Error for PipelineError {}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;
