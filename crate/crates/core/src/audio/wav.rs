use std::fs;
use std::path::Path;

use super::{AudioError, Result, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavEncoding {
    Pcm16,
    #[default]
    Float32,
}

const PCM16_SCALE: f64 = 32768.0;

fn map_hound(err: hound::Error) -> AudioError {
    match err {
        // hound reports truncated chunks as `Other` I/O errors.
        hound::Error::IoError(e)
            if matches!(e.kind(), std::io::ErrorKind::UnexpectedEof | std::io::ErrorKind::Other) =>
        {
            AudioError::CorruptHeader(e.to_string())
        }
        hound::Error::IoError(e) => AudioError::Io(e),
        hound::Error::FormatError(msg) => AudioError::CorruptHeader(msg.to_string()),
        hound::Error::Unsupported => AudioError::UnsupportedFormat("unsupported WAV feature".into()),
        hound::Error::InvalidSampleFormat => {
            AudioError::UnsupportedFormat("sample format does not match header".into())
        }
        other => AudioError::CorruptHeader(other.to_string()),
    }
}

/// Reads a PCM16 or float32 WAV file, averaging channels down to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(AudioError::FileNotFound(path.display().to_string()));
    }
    let mut reader = hound::WavReader::open(path).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.channels == 0 {
        return Err(AudioError::CorruptHeader("zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / PCM16_SCALE))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_hound)?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_hound)?,
        (fmt, bits) => {
            return Err(AudioError::UnsupportedFormat(format!("{fmt:?} with {bits} bits per sample")))
        }
    };
    let channels = spec.channels as usize;
    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    let w = Waveform { samples, sample_rate: spec.sample_rate };
    w.validate()?;
    Ok(w)
}

fn quantize_pcm16(x: f64) -> i16 {
    (x.clamp(-1.0, 1.0) * PCM16_SCALE).round().clamp(-32768.0, 32767.0) as i16
}

/// Writes a mono WAV file. The file is written to a temporary sibling and
/// renamed into place, so readers never observe a partial file.
pub fn write_wav(w: &Waveform, path: impl AsRef<Path>, encoding: WavEncoding) -> Result<()> {
    w.validate()?;
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => hound::SampleFormat::Int,
            WavEncoding::Float32 => hound::SampleFormat::Float,
        },
    };
    let tmp = temp_sibling(path);
    {
        let mut writer = hound::WavWriter::create(&tmp, spec).map_err(map_hound)?;
        for &s in &w.samples {
            match encoding {
                WavEncoding::Pcm16 => writer.write_sample(quantize_pcm16(s)),
                WavEncoding::Float32 => writer.write_sample(s as f32),
            }
            .map_err(map_hound)?;
        }
        writer.finalize().map_err(map_hound)?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub(crate) fn temp_sibling(path: &Path) -> std::path::PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.{}.tmp", std::process::id()))
}
