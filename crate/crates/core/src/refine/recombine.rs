use super::{RefineError, Result};
use crate::audio::Waveform;
use crate::edit::{apply_edit, EditScript, EditorSpec};

pub const NOISE_SPLICE_FADE_MS: f64 = 10.0;

/// `Y = X_e + X_n`. When the edit changed the duration, the noise track is
/// first lengthened or shortened at `anchor` (the edit point) to match
/// `x_e`: insertions loop-splice a copy of the noise around the anchor,
/// deletions cut the noise there, both with 10 ms crossfades.
pub fn recombine(x_e: &Waveform, x_n: &Waveform, anchor: Option<usize>) -> Result<Waveform> {
    if x_e.sample_rate != x_n.sample_rate {
        return Err(RefineError::SampleRateMismatch(x_e.sample_rate, x_n.sample_rate));
    }
    let noise = if x_e.len() == x_n.len() {
        x_n.clone()
    } else {
        let anchor = anchor.ok_or(RefineError::MissingAnchor { speech: x_e.len(), noise: x_n.len() })?;
        reconcile_noise(x_n, x_e.len(), anchor)?
    };
    Ok(Waveform {
        samples: x_e.samples.iter().zip(&noise.samples).map(|(a, b)| a + b).collect(),
        sample_rate: x_e.sample_rate,
    })
}

pub fn reconcile_noise(x_n: &Waveform, target_len: usize, anchor: usize) -> Result<Waveform> {
    let n = x_n.len();
    let spec = EditorSpec::Splice { crossfade_ms: NOISE_SPLICE_FADE_MS };
    let edited = if target_len > n {
        let anchor = anchor.min(n);
        let material = loop_material(x_n, target_len - n, anchor);
        apply_edit(x_n, &EditScript::insertion(anchor, material), &spec)
    } else {
        let cut = n - target_len;
        let anchor = anchor.min(n - cut);
        apply_edit(x_n, &EditScript::deletion(anchor, cut), &spec)
    };
    edited.map_err(|e| RefineError::Recombine(e.to_string()))
}

/// `len` samples built by crossfade-looping the noise window centred on
/// `anchor`.
fn loop_material(x_n: &Waveform, len: usize, anchor: usize) -> Waveform {
    let n = x_n.len();
    if n == 0 {
        return Waveform::silence(len, x_n.sample_rate);
    }
    let fade = x_n.ms_to_samples(NOISE_SPLICE_FADE_MS);
    let window_len = n.min(len.max(4 * fade).max(1));
    let start = anchor.saturating_sub(window_len / 2).min(n - window_len);
    let window = &x_n.samples[start..start + window_len];
    let fade = fade.min(window_len / 2);
    let mut out = window.to_vec();
    while out.len() < len {
        let from = out.len() - fade;
        for i in 0..fade {
            let t = (i as f64 + 0.5) / fade as f64;
            let g_in = (std::f64::consts::FRAC_PI_2 * t).sin().powi(2);
            out[from + i] = (1.0 - g_in) * out[from + i] + g_in * window[i];
        }
        out.extend_from_slice(&window[fade..]);
    }
    out.truncate(len);
    Waveform { samples: out, sample_rate: x_n.sample_rate }
}
