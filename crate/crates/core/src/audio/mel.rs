use super::{AudioError, FrameGeometry, Result, Spectrogram};

/// Floor applied to band energies before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    /// frames × mel_bands, natural log of band power.
    pub log_energies: Vec<Vec<f64>>,
    pub mel_bands: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub sample_rate: u32,
    pub geometry: FrameGeometry,
    pub signal_length: usize,
}

impl MelSpectrogram {
    pub fn frames(&self) -> usize {
        self.log_energies.len()
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters (bands × bins), unit peak, equally spaced on the mel scale.
pub fn mel_filterbank(
    mel_bands: usize,
    fmin: f64,
    fmax: f64,
    frame_length: usize,
    sample_rate: u32,
) -> Result<Vec<Vec<f64>>> {
    let nyquist = sample_rate as f64 / 2.0;
    if mel_bands == 0 {
        return Err(AudioError::InvalidBandRange("mel_bands must be at least 1".into()));
    }
    if !(fmin >= 0.0 && fmin < fmax && fmax <= nyquist) {
        return Err(AudioError::InvalidBandRange(format!(
            "need 0 <= fmin < fmax <= {nyquist}, got fmin={fmin} fmax={fmax}"
        )));
    }
    let lo = hz_to_mel(fmin);
    let hi = hz_to_mel(fmax);
    let edges: Vec<f64> = (0..mel_bands + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (mel_bands + 1) as f64))
        .collect();
    let bins = frame_length / 2 + 1;
    let bin_hz = sample_rate as f64 / frame_length as f64;
    Ok((0..mel_bands)
        .map(|j| {
            let (left, centre, right) = (edges[j], edges[j + 1], edges[j + 2]);
            (0..bins)
                .map(|b| {
                    let f = b as f64 * bin_hz;
                    let up = (f - left) / (centre - left);
                    let down = (right - f) / (right - centre);
                    up.min(down).max(0.0)
                })
                .collect()
        })
        .collect())
}

/// Applies the mel filterbank to the power spectrum and takes a floored log.
pub fn mel_spectrogram(s: &Spectrogram, mel_bands: usize, fmin: f64, fmax: f64) -> Result<MelSpectrogram> {
    let fb = mel_filterbank(mel_bands, fmin, fmax, s.frame_length, s.sample_rate)?;
    let log_energies = s
        .magnitudes
        .iter()
        .map(|mags| {
            fb.iter()
                .map(|filter| {
                    let e: f64 = filter.iter().zip(mags).map(|(w, m)| w * m * m).sum();
                    e.max(LOG_FLOOR).ln()
                })
                .collect()
        })
        .collect();
    Ok(MelSpectrogram {
        log_energies,
        mel_bands,
        fmin,
        fmax,
        sample_rate: s.sample_rate,
        geometry: s.geometry(),
        signal_length: s.signal_length,
    })
}
