//! Command-line front end. Every subcommand reads and writes WAV files and
//! runs the same library code as the in-process pipeline.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::MetricReport;
use crate::audio::{read_wav, write_wav, WavEncoding, Waveform};
use crate::edit::{apply_edit, EditOperation, EditScript, Transcript};
use crate::exec::Execution;
use crate::fixtures::{corpus, FIXTURE_RATE};
use crate::pipeline::{
    persist, refine_stage, run_batch, run_pipeline, BatchItem, PipelineConfig, PipelineError, Stage,
};
use crate::refine::{recombine, train_refiner, TrainingSettings};
use crate::sbl::{suppress, IirFilter};
use crate::separation::separate;

#[derive(Debug, Parser)]
#[command(name = "nredit", version, about = "Noise-resilient speech editing toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// TOML config file; falls back to $NREDIT_CONFIG, then built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EditArgs {
    #[arg(long)]
    edit_start: usize,
    #[arg(long, default_value_t = 0)]
    edit_len: usize,
    /// insertion, replacement or deletion
    #[arg(long)]
    op: EditOperation,
    /// Replacement or inserted audio.
    #[arg(long)]
    replacement: Option<PathBuf>,
    #[arg(long)]
    orig_transcript: Option<String>,
    #[arg(long)]
    target_transcript: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split a noisy recording into speech and noise.
    Separate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        speech_out: PathBuf,
        #[arg(long)]
        noise_out: PathBuf,
        /// Use the oracle separator with this clean reference.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Sparse recovery plus zero-phase filtering of separated speech.
    Suppress {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Comma-separated numerator coefficients.
        #[arg(long, allow_hyphen_values = true, requires = "a")]
        b: Option<String>,
        /// Comma-separated denominator coefficients, a[0] = 1.
        #[arg(long, allow_hyphen_values = true, requires = "b")]
        a: Option<String>,
    },
    /// Apply one edit to a waveform.
    Edit {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        edit: EditArgs,
    },
    /// Cross-attention refinement of edited speech against a suppressed context.
    Refine {
        #[command(flatten)]
        config: ConfigArg,
        /// Edited speech (queries and decoder reference).
        #[arg(long)]
        input: PathBuf,
        /// Keys and values, normally the edited suppressed speech.
        #[arg(long)]
        context: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Attention block file overriding the config.
        #[arg(long)]
        block: Option<PathBuf>,
    },
    /// Add the noise track back to edited speech.
    Recombine {
        #[arg(long)]
        speech: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Edit point used when the lengths differ.
        #[arg(long)]
        anchor: Option<usize>,
    },
    /// Spectral statistics, SNR and boundary scores as CSV (and JSON).
    Analyze {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long = "boundary")]
        boundaries: Vec<usize>,
        /// Write CSV here instead of standard output.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run every stage and persist all artifacts.
    Pipeline {
        #[command(flatten)]
        config: ConfigArg,
        /// One or more inputs; several inputs are processed as a batch into
        /// per-file subdirectories.
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[command(flatten)]
        edit: EditArgs,
        /// Process batch inputs one at a time.
        #[arg(long)]
        sequential: bool,
    },
    /// Write the synthetic fixture corpus.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 1.0)]
        seconds: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit an attention block on paired noisy/clean recordings.
    TrainRefiner {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, required = true)]
        noisy: Vec<PathBuf>,
        #[arg(long, required = true)]
        clean: Vec<PathBuf>,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 1e-2)]
        learning_rate: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Stage(PipelineError),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Stage(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn stage_err<E: std::fmt::Display>(stage: Stage) -> impl Fn(E) -> Failure {
    move |e| Failure::Stage(PipelineError::new(stage, e.to_string()))
}

fn load_config(arg: &ConfigArg) -> CliResult<PipelineConfig> {
    Ok(PipelineConfig::load_or_default(arg.config.as_deref())?)
}

fn with_oracle(cfg: PipelineConfig, reference: Option<&Path>) -> CliResult<PipelineConfig> {
    match reference {
        None => Ok(cfg),
        Some(r) => {
            let r = std::fs::canonicalize(r).map_err(|e| Failure::Usage(format!("{}: {e}", r.display())))?;
            Ok(cfg.modified(|f| {
                f.separator.kind = "oracle".into();
                f.separator.params = [("reference".to_string(), toml::Value::String(r.display().to_string()))].into();
            })?)
        }
    }
}

fn read(path: &Path, stage: Stage) -> CliResult<Waveform> {
    read_wav(path).map_err(|e| Failure::Stage(PipelineError::new(stage, format!("{}: {e}", path.display()))))
}

fn write(w: &Waveform, path: &Path, stage: Stage) -> CliResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(stage_err(stage))?;
    }
    write_wav(&w.to_f32_precision(), path, WavEncoding::Float32)
        .map_err(|e| Failure::Stage(PipelineError::new(stage, format!("{}: {e}", path.display()))))
}

fn parse_coefficients(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Failure::Usage(format!("not a coefficient: `{t}`"))))
        .collect()
}

fn build_script(edit: &EditArgs) -> CliResult<EditScript> {
    let replacement_audio = edit.replacement.as_deref().map(|p| read(p, Stage::Input)).transpose()?;
    let transcript = match (&edit.orig_transcript, &edit.target_transcript) {
        (None, None) => None,
        (o, t) => Some(Transcript { original: o.clone().unwrap_or_default(), target: t.clone().unwrap_or_default() }),
    };
    Ok(EditScript {
        region_start: edit.edit_start,
        region_len: edit.edit_len,
        operation: edit.op,
        replacement_audio: replacement_audio.map(|w| w.to_f32_precision()),
        transcript,
    })
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Separate { config, input, speech_out, noise_out, reference } => {
            let cfg = with_oracle(load_config(&config)?, reference.as_deref())?;
            let x = read(&input, Stage::Input)?.to_f32_precision();
            let r = separate(&x, &cfg.separator).map_err(stage_err(Stage::Separate))?;
            write(&r.speech, &speech_out, Stage::Persist)?;
            write(&r.noise, &noise_out, Stage::Persist)
        }
        Command::Suppress { config, input, output, b, a } => {
            let cfg = load_config(&config)?;
            let filter = match (b, a) {
                (Some(b), Some(a)) => IirFilter::new(parse_coefficients(&b)?, parse_coefficients(&a)?).map_err(stage_err(Stage::Config))?,
                _ => cfg.filter.clone(),
            };
            let x = read(&input, Stage::Input)?;
            let out = if cfg.suppression_enabled() {
                suppress(&x, &cfg.file.suppress.config, &filter).map_err(stage_err(Stage::Suppress))?
            } else {
                x
            };
            write(&out, &output, Stage::Persist)
        }
        Command::Edit { config, input, output, edit } => {
            let cfg = load_config(&config)?;
            let script = build_script(&edit)?;
            let x = read(&input, Stage::Input)?;
            let out = apply_edit(&x, &script, &cfg.editor).map_err(stage_err(Stage::Edit))?;
            write(&out, &output, Stage::Persist)
        }
        Command::Refine { config, input, context, output, block } => {
            let mut cfg = load_config(&config)?;
            if let Some(path) = block {
                let path = std::fs::canonicalize(&path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
                cfg = cfg.modified(|f| f.refine.block = Some(path))?;
            }
            let x = read(&input, Stage::Input)?;
            let out = if cfg.refinement_enabled() {
                let kv = read(&context, Stage::Input)?;
                refine_stage(&x, &kv, &cfg.block, &cfg.embedder)?
            } else {
                x
            };
            write(&out, &output, Stage::Persist)
        }
        Command::Recombine { speech, noise, output, anchor } => {
            let (s, n) = (read(&speech, Stage::Input)?, read(&noise, Stage::Input)?);
            let y = recombine(&s, &n, anchor).map_err(stage_err(Stage::Recombine))?;
            write(&y, &output, Stage::Persist)
        }
        Command::Analyze { config, input, reference, boundaries, csv, json } => {
            let cfg = load_config(&config)?;
            let x = read(&input, Stage::Input)?;
            let r = reference.as_deref().map(|p| read(p, Stage::Input)).transpose()?;
            if let Some(r) = &r {
                if r.len() != x.len() {
                    return Err(Failure::Stage(PipelineError::new(
                        Stage::Analyze,
                        format!("reference has {} samples, input has {}", r.len(), x.len()),
                    )));
                }
            }
            let mut report = MetricReport::default();
            let stage = input.file_stem().map_or("input".to_string(), |s| s.to_string_lossy().into_owned());
            report.analyze_stage(&stage, &x, r.as_ref(), &boundaries, &cfg.file.analysis).map_err(stage_err(Stage::Analyze))?;
            if let Some(path) = json {
                std::fs::write(path, report.to_json()).map_err(stage_err(Stage::Persist))?;
            }
            match csv {
                Some(path) => std::fs::write(path, report.to_csv()).map_err(stage_err(Stage::Persist))?,
                None => print!("{}", report.to_csv()),
            }
            Ok(())
        }
        Command::Pipeline { config, input, out, reference, edit, sequential } => {
            let mut cfg = with_oracle(load_config(&config)?, reference.as_deref())?;
            let out = out.or_else(|| cfg.file.output.dir.as_ref().map(|d| cfg.base_dir.join(d)));
            let Some(out) = out else {
                return Err(Failure::Usage("an output directory is needed (--out or [output] dir)".into()));
            };
            cfg.file.output.dir = None;
            let script = build_script(&edit)?;
            if input.len() == 1 {
                let x = read(&input[0], Stage::Input)?;
                let artifacts = run_pipeline(&x, &script, &cfg)?;
                persist(&artifacts, &out)?;
                return Ok(());
            }
            let mut items = Vec::new();
            for path in &input {
                let stem = path.file_stem().map_or("input".into(), |s| s.to_string_lossy().into_owned());
                items.push(BatchItem { input: read(path, Stage::Input)?, script: script.clone(), out_dir: out.join(stem) });
            }
            let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
            let mut first_error = None;
            for (path, result) in input.iter().zip(run_batch(&items, &cfg, exec)) {
                if let Err(e) = result {
                    eprintln!("{}: {e}", path.display());
                    first_error.get_or_insert(e);
                }
            }
            first_error.map_or(Ok(()), |e| Err(Failure::Stage(e)))
        }
        Command::Fixtures { out, count, seconds, seed } => {
            if !(seconds > 0.0) {
                return Err(Failure::Usage("--seconds must be positive".into()));
            }
            std::fs::create_dir_all(&out).map_err(stage_err(Stage::Persist))?;
            let len = (seconds * FIXTURE_RATE as f64).round() as usize;
            let mut index = Vec::new();
            for f in corpus(seed, count, len) {
                for (suffix, w) in [("clean", &f.clean), ("noise", &f.noise), ("noisy", &f.noisy)] {
                    write_wav(w, &out.join(format!("{}_{suffix}.wav", f.name)), WavEncoding::Pcm16).map_err(stage_err(Stage::Persist))?;
                }
                index.push(serde_json::json!({ "name": f.name, "snr_db": f.snr_db, "color": format!("{:?}", f.color).to_lowercase() }));
            }
            let text = serde_json::to_string_pretty(&index).map_err(stage_err(Stage::Persist))?;
            std::fs::write(out.join("index.json"), text).map_err(stage_err(Stage::Persist))
        }
        Command::TrainRefiner { config, noisy, clean, steps, learning_rate, out } => {
            if noisy.len() != clean.len() {
                return Err(Failure::Usage(format!("{} --noisy files but {} --clean files", noisy.len(), clean.len())));
            }
            let cfg = load_config(&config)?;
            let mut pairs = Vec::new();
            for (n, c) in noisy.iter().zip(&clean) {
                pairs.push((read(n, Stage::Input)?, read(c, Stage::Input)?));
            }
            let settings = TrainingSettings { steps, learning_rate };
            let (block, report) = train_refiner(&pairs, &cfg.block, settings, &cfg.embedder, &cfg.file.suppress.config, &cfg.filter)
                .map_err(stage_err(Stage::Refine))?;
            block.save(&out).map_err(stage_err(Stage::Persist))?;
            eprintln!("loss {:.6} -> {:.6}", report.initial_loss, report.final_loss);
            Ok(())
        }
    }
}

/// Runs the CLI on `argv` (including the program name). Returns 0 on
/// success, 1 on usage errors and 2 when a stage fails.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(cli.command)));
    match outcome {
        Ok(Ok(())) => 0,
        Ok(Err(Failure::Usage(msg))) => {
            eprintln!("error: {msg}");
            1
        }
        Ok(Err(Failure::Stage(e))) => {
            eprintln!("error: {e}");
            2
        }
        Err(_) => {
            eprintln!("error: internal failure");
            2
        }
    }
}
