use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{KvSource, PipelineConfig, PipelineError, Result, Stage};
use crate::analysis::MetricReport;
use crate::audio::{write_wav, WavEncoding, Waveform};
use crate::edit::{apply_edit, EditOperation, EditScript, EditorSpec};
use crate::exec::Execution;
use crate::refine::{multi_head_refine, recombine, AttentionBlock, Embedder, EmbeddingSource, TrainingExample};
use crate::sbl::suppress;
use crate::separation::{separate, OracleReference, SeparatorSpec};

/// Artifact names in pipeline order.
pub const ARTIFACT_NAMES: [&str; 8] = ["X", "X_s", "X_n", "X_l", "X_e_raw", "X_le", "X_e", "Y"];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineArtifacts {
    /// Signals keyed by [`ARTIFACT_NAMES`], in that order.
    pub signals: Vec<(String, Waveform)>,
    pub report: MetricReport,
    pub manifest: Manifest,
}

impl PipelineArtifacts {
    pub fn get(&self, name: &str) -> Option<&Waveform> {
        self.signals.iter().find(|(n, _)| n == name).map(|(_, w)| w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub name: String,
    pub file: String,
    pub samples: usize,
    pub sample_rate: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub config_hash: String,
    pub refinement: bool,
    pub suppression: bool,
    pub edit: EditSummary,
    pub artifacts: Vec<ManifestEntry>,
    pub metrics_json: String,
    pub metrics_csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EditSummary {
    pub operation: EditOperation,
    pub region_start: usize,
    pub region_len: usize,
    pub replacement_len: Option<usize>,
    pub boundaries: Vec<usize>,
}

/// Junction positions in the edited signal.
pub fn edit_boundaries(script: &EditScript, editor: &EditorSpec, sample_rate: u32) -> Vec<usize> {
    let m = script.region_start;
    let r = script.replacement_audio.as_ref().map_or(0, Waveform::len);
    let fade = match editor {
        EditorSpec::Splice { crossfade_ms } => (crossfade_ms * sample_rate as f64 / 1000.0).round() as usize,
        EditorSpec::External(_) => 0,
    };
    match script.operation {
        EditOperation::Insertion => vec![m, m + r],
        EditOperation::Deletion => vec![m],
        EditOperation::Replacement if r == 0 => vec![m.saturating_sub(fade / 2)],
        EditOperation::Replacement => vec![m.saturating_sub(fade / 2), (m + r).saturating_sub(fade + fade / 2)],
    }
}

/// Embeds the edited speech and its K/V source, refines with `block`, and
/// decodes the result against the edited speech.
pub fn refine_stage(x_e_raw: &Waveform, kv: &Waveform, block: &AttentionBlock, embedder: &Embedder) -> Result<Waveform> {
    let refine_err = PipelineError::at(Stage::Refine);
    let q = embedder.embed(x_e_raw, EmbeddingSource::FromXs).map_err(&refine_err)?;
    let kv = embedder.embed(kv, EmbeddingSource::FromXle).map_err(&refine_err)?;
    let refined = multi_head_refine(&q, &kv, block).map_err(&refine_err)?;
    embedder.reconstruct(&refined, x_e_raw).map_err(&refine_err)
}

/// Training example drawn from one edit whose clean speech is known. The
/// pipeline runs with refinement off; queries embed `X_e_raw`, keys and values
/// embed the configured K/V source, and the target embeds the same edit applied
/// to `clean`.
pub fn edit_training_example(
    noisy: &Waveform,
    clean: &Waveform,
    script: &EditScript,
    cfg: &PipelineConfig,
) -> Result<TrainingExample> {
    let mut plain = cfg.clone();
    plain.file.refine.enabled = false;
    plain.file.output.dir = None;
    let artifacts = run_pipeline(noisy, script, &plain)?;
    let target = apply_edit(&clean.to_f32_precision(), script, &cfg.editor).map_err(PipelineError::at(Stage::Edit))?;
    let kv_name = match cfg.file.refine.kv_source {
        KvSource::Xle => "X_le",
        KvSource::Xl => "X_l",
    };
    let refine_err = PipelineError::at(Stage::Refine);
    let embed = |name: &str, w: Option<&Waveform>| {
        let w = w.ok_or_else(|| PipelineError::new(Stage::Refine, format!("missing artifact {name}")))?;
        cfg.embedder.embed(w, EmbeddingSource::FromXs).map(|e| e.vectors).map_err(&refine_err)
    };
    Ok(TrainingExample {
        query: embed("X_e_raw", artifacts.get("X_e_raw"))?,
        context: embed(kv_name, artifacts.get(kv_name))?,
        target: embed("target", Some(&target))?,
    })
}

/// Every stage output is rounded to single precision, the precision of the
/// persisted artifacts, so chained subcommands see identical values.
pub fn run_pipeline(input: &Waveform, script: &EditScript, cfg: &PipelineConfig) -> Result<PipelineArtifacts> {
    let x = input.to_f32_precision();
    x.validate().map_err(PipelineError::at(Stage::Input))?;

    let sep = separate(&x, &cfg.separator).map_err(PipelineError::at(Stage::Separate))?;
    let x_s = sep.speech.to_f32_precision();
    let x_n = sep.noise.to_f32_precision();

    let x_l = if cfg.suppression_enabled() {
        suppress(&x_s, &cfg.file.suppress.config, &cfg.filter).map_err(PipelineError::at(Stage::Suppress))?.to_f32_precision()
    } else {
        x_s.clone()
    };

    let edit_err = PipelineError::at(Stage::Edit);
    let x_e_raw = apply_edit(&x_s, script, &cfg.editor).map_err(&edit_err)?.to_f32_precision();
    let x_le = apply_edit(&x_l, script, &cfg.editor).map_err(&edit_err)?.to_f32_precision();

    let x_e = if cfg.refinement_enabled() {
        let kv = match cfg.file.refine.kv_source {
            KvSource::Xle => &x_le,
            KvSource::Xl => &x_l,
        };
        refine_stage(&x_e_raw, kv, &cfg.block, &cfg.embedder)?.to_f32_precision()
    } else {
        x_e_raw.clone()
    };

    let y = recombine(&x_e, &x_n, Some(script.region_start)).map_err(PipelineError::at(Stage::Recombine))?.to_f32_precision();

    let boundaries = edit_boundaries(script, &cfg.editor, x.sample_rate);
    let reference = match &cfg.separator {
        SeparatorSpec::Oracle(OracleReference::Waveform(w)) => Some(w.to_f32_precision()),
        SeparatorSpec::Oracle(OracleReference::Path(p)) => crate::audio::read_wav(p).ok(),
        _ => None,
    };
    let mut report = MetricReport { config_hash: Some(cfg.hash()), ..Default::default() };
    let geometry = &cfg.file.analysis;
    let analyze_err = PipelineError::at(Stage::Analyze);
    report.analyze_stage("X", &x, reference.as_ref(), &[], geometry).map_err(&analyze_err)?;
    report.analyze_stage("X_s", &x_s, reference.as_ref(), &[], geometry).map_err(&analyze_err)?;
    report.analyze_stage("X_l", &x_l, reference.as_ref(), &[], geometry).map_err(&analyze_err)?;
    report.analyze_stage("X_e", &x_e, None, &boundaries, geometry).map_err(&analyze_err)?;
    report.analyze_stage("Y", &y, Some(&x), &boundaries, geometry).map_err(&analyze_err)?;
    if let Some(r) = &reference {
        report.analyze_stage("reference", r, None, &[], geometry).map_err(&analyze_err)?;
    }

    let signals: Vec<(String, Waveform)> = ARTIFACT_NAMES
        .iter()
        .zip([x, x_s, x_n, x_l, x_e_raw, x_le, x_e, y])
        .map(|(n, w)| (n.to_string(), w))
        .collect();
    let manifest = Manifest {
        config_hash: cfg.hash(),
        refinement: cfg.refinement_enabled(),
        suppression: cfg.suppression_enabled(),
        edit: EditSummary {
            operation: script.operation,
            region_start: script.region_start,
            region_len: script.region_len,
            replacement_len: script.replacement_audio.as_ref().map(Waveform::len),
            boundaries,
        },
        artifacts: signals
            .iter()
            .map(|(n, w)| ManifestEntry { name: n.clone(), file: format!("{n}.wav"), samples: w.len(), sample_rate: w.sample_rate })
            .collect(),
        metrics_json: "metrics.json".into(),
        metrics_csv: "metrics.csv".into(),
    };
    let artifacts = PipelineArtifacts { signals, report, manifest };
    if let Some(dir) = &cfg.file.output.dir {
        persist(&artifacts, &cfg.base_dir.join(dir))?;
    }
    Ok(artifacts)
}

fn persist_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::new(Stage::Persist, e.to_string())
}

fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp-write");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}

/// Writes the eight WAVs (float32), `manifest.json` and the metric reports.
pub fn persist(artifacts: &PipelineArtifacts, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(persist_err)?;
    for (name, w) in &artifacts.signals {
        write_wav(w, &dir.join(format!("{name}.wav")), WavEncoding::Float32).map_err(persist_err)?;
    }
    write_atomic(&dir.join("metrics.json"), &artifacts.report.to_json()).map_err(persist_err)?;
    write_atomic(&dir.join("metrics.csv"), &artifacts.report.to_csv()).map_err(persist_err)?;
    let manifest = serde_json::to_string_pretty(&artifacts.manifest).map_err(persist_err)?;
    write_atomic(&dir.join("manifest.json"), &manifest).map_err(persist_err)
}

#[derive(Debug, Clone)]
pub struct BatchItem {
    pub input: Waveform,
    pub script: EditScript,
    pub out_dir: PathBuf,
}

/// One pipeline per item, run concurrently under `exec`; each item persists
/// to its own directory.
pub fn run_batch(items: &[BatchItem], cfg: &PipelineConfig, exec: Execution) -> Vec<Result<PipelineArtifacts>> {
    exec.map(items, |item| {
        let mut cfg = cfg.clone();
        cfg.file.output.dir = None;
        let artifacts = run_pipeline(&item.input, &item.script, &cfg)?;
        persist(&artifacts, &item.out_dir)?;
        Ok(artifacts)
    })
}
