//! Masked-region editing: a deterministic crossfade splice editor and an
//! adapter for external editing models.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{read_wav, write_wav, AudioError, WavEncoding, Waveform};
use crate::external::{path_string, ExternalCommand};

pub const DEFAULT_CROSSFADE_MS: f64 = 10.0;

#[derive(Debug, Error)]
pub enum EditError {
    #[error("edit region [{start}, {end}) is outside a signal of {len} samples")]
    RegionOutOfBounds { start: usize, end: usize, len: usize },
    #[error("{0:?} requires replacement material")]
    MissingReplacement(EditOperation),
    #[error("crossfade of {fade} samples is longer than a {segment}-sample segment")]
    FadeTooLong { fade: usize, segment: usize },
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),
    #[error("editing backend failed: {0}")]
    BackendFailure(String),
    #[error("invalid editor spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

pub type Result<T, E = EditError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditOperation {
    Insertion,
    Replacement,
    Deletion,
}

impl std::str::FromStr for EditOperation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "insertion" | "insert" => Ok(Self::Insertion),
            "replacement" | "replace" => Ok(Self::Replacement),
            "deletion" | "delete" => Ok(Self::Deletion),
            other => Err(format!("unknown edit operation `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub original: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditScript {
    pub region_start: usize,
    /// Ignored for insertion.
    pub region_len: usize,
    pub operation: EditOperation,
    pub replacement_audio: Option<Waveform>,
    pub transcript: Option<Transcript>,
}

impl EditScript {
    pub fn replacement(region_start: usize, region_len: usize, audio: Waveform) -> Self {
        Self {
            region_start,
            region_len,
            operation: EditOperation::Replacement,
            replacement_audio: Some(audio),
            transcript: None,
        }
    }

    pub fn insertion(at: usize, audio: Waveform) -> Self {
        Self { region_start: at, region_len: 0, operation: EditOperation::Insertion, replacement_audio: Some(audio), transcript: None }
    }

    pub fn deletion(region_start: usize, region_len: usize) -> Self {
        Self { region_start, region_len, operation: EditOperation::Deletion, replacement_audio: None, transcript: None }
    }

    /// An empty replacement at `at`: a no-op on any signal when the splice
    /// fade is zero.
    pub fn identity(at: usize, sample_rate: u32) -> Self {
        Self::replacement(at, 0, Waveform::silence(0, sample_rate))
    }

    /// Replaces `[start, start + len)` of `x` with a copy of itself.
    pub fn self_replacement(x: &Waveform, region_start: usize, region_len: usize) -> Self {
        let end = (region_start + region_len).min(x.len());
        Self::replacement(region_start, region_len, x.slice(region_start.min(end), end))
    }

    pub fn region_end(&self) -> usize {
        match self.operation {
            EditOperation::Insertion => self.region_start,
            _ => self.region_start + self.region_len,
        }
    }

    pub fn validate(&self, input_len: usize, needs_audio: bool) -> Result<()> {
        let end = self.region_end();
        if end > input_len {
            return Err(EditError::RegionOutOfBounds { start: self.region_start, end, len: input_len });
        }
        if self.operation != EditOperation::Deletion {
            let has_audio = self.replacement_audio.is_some();
            let has_text = self.transcript.as_ref().is_some_and(|t| !t.target.is_empty());
            if (needs_audio && !has_audio) || (!needs_audio && !has_audio && !has_text) {
                return Err(EditError::MissingReplacement(self.operation));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EditorSpec {
    Splice { crossfade_ms: f64 },
    /// Command template with `{input}`, `{output}`, `{region_start}`,
    /// `{region_len}`, `{orig_transcript}` and `{target_transcript}`.
    External(ExternalCommand),
}

impl Default for EditorSpec {
    fn default() -> Self {
        EditorSpec::Splice { crossfade_ms: DEFAULT_CROSSFADE_MS }
    }
}

impl EditorSpec {
    pub fn from_params(kind: &str, params: &BTreeMap<String, String>) -> Result<Self> {
        match kind {
            "splice" => {
                let ms = match params.get("crossfade_ms") {
                    Some(v) => v.parse().map_err(|_| EditError::InvalidSpec(format!("crossfade_ms is not a number: {v}")))?,
                    None => DEFAULT_CROSSFADE_MS,
                };
                if !(ms >= 0.0 && f64::is_finite(ms)) {
                    return Err(EditError::InvalidSpec(format!("crossfade_ms must be >= 0, got {ms}")));
                }
                Ok(EditorSpec::Splice { crossfade_ms: ms })
            }
            "external" => {
                let command = params.get("command").ok_or_else(|| EditError::InvalidSpec("external requires `command`".into()))?;
                let timeout = match params.get("timeout_secs") {
                    Some(v) => v.parse().map_err(|_| EditError::InvalidSpec(format!("timeout_secs is not a number: {v}")))?,
                    None => 600.0,
                };
                Ok(EditorSpec::External(ExternalCommand::new(
                    command.clone(),
                    params.get("working_dir").map(PathBuf::from),
                    Duration::from_secs_f64(timeout),
                )))
            }
            other => Err(EditError::InvalidSpec(format!("unknown editor kind `{other}`"))),
        }
    }
}

/// Raised-cosine gains at position `i` of an `n`-sample fade. The two gains
/// sum to exactly one up to rounding.
fn fade_gains(i: usize, n: usize) -> (f64, f64) {
    let t = (i as f64 + 0.5) / n as f64;
    let s = (FRAC_PI_2 * t).sin();
    let fade_in = s * s;
    (1.0 - fade_in, fade_in)
}

/// Appends `b` to `a`, overlapping the last `fade` samples of `a` with the
/// first `fade` samples of `b`.
fn join(mut a: Vec<f64>, b: &[f64], fade: usize) -> Vec<f64> {
    let start = a.len() - fade;
    for i in 0..fade {
        let (g_out, g_in) = fade_gains(i, fade);
        a[start + i] = g_out * a[start + i] + g_in * b[i];
    }
    a.extend_from_slice(&b[fade..]);
    a
}

fn check_rates(ws: &[&Waveform]) -> Result<u32> {
    let rate = ws[0].sample_rate;
    for w in ws {
        if w.sample_rate != rate {
            return Err(EditError::SampleRateMismatch(rate, w.sample_rate));
        }
    }
    Ok(rate)
}

/// Joins three segments with crossfades at both junctions. An empty insert
/// collapses to a single junction between head and tail.
pub fn crossfade_splice(head: &Waveform, insert: &Waveform, tail: &Waveform, fade_ms: f64) -> Result<Waveform> {
    let rate = check_rates(&[head, insert, tail])?;
    let fade = head.ms_to_samples(fade_ms.max(0.0));
    let check = |segment: usize| {
        if fade > segment {
            Err(EditError::FadeTooLong { fade, segment })
        } else {
            Ok(())
        }
    };
    check(head.len())?;
    check(tail.len())?;
    let mut out = head.samples.clone();
    if !insert.is_empty() {
        check(insert.len())?;
        out = join(out, &insert.samples, fade);
    }
    out = join(out, &tail.samples, fade);
    Ok(Waveform { samples: out, sample_rate: rate })
}

pub fn apply_edit(x: &Waveform, script: &EditScript, spec: &EditorSpec) -> Result<Waveform> {
    x.validate()?;
    match spec {
        EditorSpec::Splice { crossfade_ms } => {
            script.validate(x.len(), true)?;
            splice_edit(x, script, *crossfade_ms)
        }
        EditorSpec::External(cmd) => {
            script.validate(x.len(), false)?;
            external_edit(x, script, cmd)
        }
    }
}

/// Replacement joins `x[..m]`, the new material and `x[m + len..]`, so each
/// junction shortens the output by the fade length. Insertion and deletion
/// borrow the fade overlap from the input around the edit point so the
/// output length is exactly the nominal one; their fades shrink near the
/// signal edges.
fn splice_edit(x: &Waveform, script: &EditScript, fade_ms: f64) -> Result<Waveform> {
    let m = script.region_start;
    let rate = x.sample_rate;
    let fade = x.ms_to_samples(fade_ms.max(0.0));
    match script.operation {
        EditOperation::Replacement => {
            let audio = script.replacement_audio.as_ref().ok_or(EditError::MissingReplacement(script.operation))?;
            let end = script.region_end();
            crossfade_splice(&x.slice(0, m), audio, &x.slice(end, x.len()), fade_ms)
        }
        EditOperation::Insertion => {
            let audio = script.replacement_audio.as_ref().ok_or(EditError::MissingReplacement(script.operation))?;
            check_rates(&[x, audio])?;
            let n = x.len();
            let f = fade.min(m).min(n - m).min(audio.len() / 2);
            let head = &x.samples[..m + f];
            let tail = &x.samples[m - f..];
            let out = join(join(head.to_vec(), &audio.samples, f), tail, f);
            Ok(Waveform { samples: out, sample_rate: rate })
        }
        EditOperation::Deletion => {
            let end = script.region_end();
            let n = x.len();
            let f = fade.min(n - end);
            let head = &x.samples[..m + f];
            Ok(Waveform { samples: join(head.to_vec(), &x.samples[end..], f), sample_rate: rate })
        }
    }
}

fn external_edit(x: &Waveform, script: &EditScript, cmd: &ExternalCommand) -> Result<Waveform> {
    let dir = tempfile::tempdir().map_err(AudioError::Io)?;
    let input = dir.path().join("input.wav");
    let output = dir.path().join("output.wav");
    write_wav(x, &input, WavEncoding::Float32)?;
    let transcript = script.transcript.clone().unwrap_or_default();
    let mut values = BTreeMap::new();
    values.insert("input", path_string(&input));
    values.insert("output", format!("{}/output.wav", path_string(dir.path())));
    values.insert("region_start", script.region_start.to_string());
    values.insert("region_len", script.region_len.to_string());
    values.insert("orig_transcript", transcript.original);
    values.insert("target_transcript", transcript.target);
    if let Some(audio) = &script.replacement_audio {
        let replacement = dir.path().join("replacement.wav");
        write_wav(audio, &replacement, WavEncoding::Float32)?;
        values.insert("replacement", path_string(&replacement));
    }
    cmd.run(&values).map_err(EditError::BackendFailure)?;
    let out = read_wav(&output).map_err(|e| EditError::BackendFailure(format!("unreadable editor output: {e}")))?;
    if out.sample_rate != x.sample_rate {
        return Err(EditError::BackendFailure(format!("editor output is {} Hz, input is {} Hz", out.sample_rate, x.sample_rate)));
    }
    Ok(out)
}
