//! Speech/noise separation backends.
//!
//! Every backend's noise track is recomputed as `input - speech`, so
//! `speech + noise == input` holds sample-for-sample regardless of what the
//! backend produced.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

use crate::audio::{istft, read_wav, stft, write_wav, AudioError, FrameGeometry, WavEncoding, Waveform};
use crate::external::{path_string, ExternalCommand};

#[derive(Debug, Error)]
pub enum SeparationError {
    #[error("separation backend failed: {0}")]
    BackendFailure(String),
    #[error("reference has {reference} samples at {reference_rate} Hz, input has {input} at {input_rate} Hz")]
    ReferenceMismatch { reference: usize, reference_rate: u32, input: usize, input_rate: u32 },
    #[error("invalid separator spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

pub type Result<T, E = SeparationError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationResult {
    pub speech: Waveform,
    pub noise: Waveform,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleReference {
    Path(PathBuf),
    Waveform(Waveform),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeparatorSpec {
    /// Uses the known clean signal as the speech estimate.
    Oracle(OracleReference),
    SpectralSubtraction { noise_floor_percentile: f64, oversubtraction: f64 },
    /// Command template with `{input}`, `{speech_out}`, `{noise_out}`.
    External(ExternalCommand),
}

impl Default for SeparatorSpec {
    fn default() -> Self {
        SeparatorSpec::SpectralSubtraction { noise_floor_percentile: 20.0, oversubtraction: 1.5 }
    }
}

impl SeparatorSpec {
    /// Builds a spec from a kind name and its key/value parameters.
    pub fn from_params(kind: &str, params: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| params.get(k).ok_or_else(|| SeparationError::InvalidSpec(format!("{kind} requires `{k}`")));
        let num = |k: &str, default: f64| -> Result<f64> {
            params.get(k).map_or(Ok(default), |v| {
                v.parse().map_err(|_| SeparationError::InvalidSpec(format!("`{k}` is not a number: {v}")))
            })
        };
        let spec = match kind {
            "oracle" => SeparatorSpec::Oracle(OracleReference::Path(PathBuf::from(get("reference")?))),
            "spectral_subtraction" => SeparatorSpec::SpectralSubtraction {
                noise_floor_percentile: num("percentile", 20.0)?,
                oversubtraction: num("oversubtraction", 1.5)?,
            },
            "external" => SeparatorSpec::External(ExternalCommand::new(
                get("command")?.clone(),
                params.get("working_dir").map(PathBuf::from),
                Duration::from_secs_f64(num("timeout_secs", 600.0)?),
            )),
            other => return Err(SeparationError::InvalidSpec(format!("unknown separator kind `{other}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SeparatorSpec::SpectralSubtraction { noise_floor_percentile: p, oversubtraction: o } => {
                if !(*p > 0.0 && *p < 100.0) {
                    return Err(SeparationError::InvalidSpec(format!("percentile must be in (0, 100), got {p}")));
                }
                if !(*o >= 1.0) {
                    return Err(SeparationError::InvalidSpec(format!("oversubtraction must be >= 1, got {o}")));
                }
            }
            SeparatorSpec::External(cmd) if !cmd.template.contains("{speech_out}") => {
                return Err(SeparationError::InvalidSpec("external command must mention {speech_out}".into()))
            }
            _ => {}
        }
        Ok(())
    }
}

/// Splits `x` into `(speech, noise)` with `speech[i] + noise[i] == x[i]` in
/// floating point. Where plain subtraction does not round-trip, the noise
/// sample is nudged by a few ulps, then the speech sample is re-derived.
pub fn complement(x: &Waveform, speech: &[f64]) -> SeparationResult {
    let mut s_out = Vec::with_capacity(x.len());
    let mut n_out = Vec::with_capacity(x.len());
    for (&xi, &si) in x.samples.iter().zip(speech) {
        let (s, n) = exact_split(xi, si);
        s_out.push(s);
        n_out.push(n);
    }
    SeparationResult {
        speech: Waveform { samples: s_out, sample_rate: x.sample_rate },
        noise: Waveform { samples: n_out, sample_rate: x.sample_rate },
    }
}

fn exact_split(x: f64, s: f64) -> (f64, f64) {
    let n = x - s;
    if s + n == x {
        return (s, n);
    }
    let mut up = n;
    let mut down = n;
    for _ in 0..8 {
        up = up.next_up();
        down = down.next_down();
        if s + up == x {
            return (s, up);
        }
        if s + down == x {
            return (s, down);
        }
    }
    let s2 = x - n;
    if s2 + n == x {
        return (s2, n);
    }
    (x, 0.0)
}

pub fn separate(x: &Waveform, spec: &SeparatorSpec) -> Result<SeparationResult> {
    x.validate()?;
    spec.validate()?;
    let speech = match spec {
        SeparatorSpec::Oracle(reference) => {
            let reference = match reference {
                OracleReference::Path(p) => read_wav(p)?,
                OracleReference::Waveform(w) => w.clone(),
            };
            if reference.len() != x.len() || reference.sample_rate != x.sample_rate {
                return Err(SeparationError::ReferenceMismatch {
                    reference: reference.len(),
                    reference_rate: reference.sample_rate,
                    input: x.len(),
                    input_rate: x.sample_rate,
                });
            }
            reference
        }
        SeparatorSpec::SpectralSubtraction { noise_floor_percentile, oversubtraction } => {
            spectral_subtract(x, *noise_floor_percentile, *oversubtraction)?
        }
        SeparatorSpec::External(cmd) => run_external(x, cmd)?,
    };
    Ok(complement(x, &speech.samples))
}

fn run_external(x: &Waveform, cmd: &ExternalCommand) -> Result<Waveform> {
    let dir = tempfile::tempdir().map_err(AudioError::Io)?;
    let input = dir.path().join("input.wav");
    let speech_out = dir.path().join("speech.wav");
    let noise_out = dir.path().join("noise.wav");
    write_wav(x, &input, WavEncoding::Float32)?;
    let mut values = BTreeMap::new();
    values.insert("input", path_string(&input));
    values.insert("speech_out", format!("{}/speech.wav", path_string(dir.path())));
    values.insert("noise_out", format!("{}/noise.wav", path_string(dir.path())));
    cmd.run(&values).map_err(SeparationError::BackendFailure)?;
    let speech = read_wav(&speech_out)
        .map_err(|e| SeparationError::BackendFailure(format!("unreadable speech output: {e}")))?;
    let _ = noise_out;
    if speech.len() != x.len() || speech.sample_rate != x.sample_rate {
        return Err(SeparationError::BackendFailure(format!(
            "speech output has {} samples at {} Hz, expected {} at {} Hz",
            speech.len(),
            speech.sample_rate,
            x.len(),
            x.sample_rate
        )));
    }
    Ok(speech)
}

/// Per-bin magnitude subtraction against a percentile noise floor, with a
/// spectral floor of 5% of the original magnitude. Phase is kept.
pub fn spectral_subtract(x: &Waveform, noise_floor_percentile: f64, oversubtraction: f64) -> Result<Waveform> {
    spectral_subtract_with(x, noise_floor_percentile, oversubtraction, FrameGeometry::default())
}

pub const SPECTRAL_FLOOR: f64 = 0.05;

pub fn spectral_subtract_with(
    x: &Waveform,
    noise_floor_percentile: f64,
    oversubtraction: f64,
    geometry: FrameGeometry,
) -> Result<Waveform> {
    let mut spec = stft(x, geometry.frame_length, geometry.hop_length)?;
    let bins = spec.bins();
    let frames = spec.frames();
    for b in 0..bins {
        let mut column: Vec<f64> = spec.magnitudes.iter().map(|row| row[b]).collect();
        column.sort_by(f64::total_cmp);
        let floor = percentile_sorted(&column, noise_floor_percentile);
        for f in 0..frames {
            let m = spec.magnitudes[f][b];
            spec.magnitudes[f][b] = (m - oversubtraction * floor).max(SPECTRAL_FLOOR * m);
        }
    }
    Ok(istft(&spec)?)
}

/// Linear-interpolated percentile of ascending data.
fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}
