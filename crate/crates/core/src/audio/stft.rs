use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{AudioError, FrameGeometry, Result, Waveform};

/// Magnitude/phase STFT, frames × (frame_length/2 + 1) bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub magnitudes: Vec<Vec<f64>>,
    pub phases: Vec<Vec<f64>>,
    pub frame_length: usize,
    pub hop_length: usize,
    pub sample_rate: u32,
    /// Length of the analysed signal before tail padding.
    pub signal_length: usize,
}

impl Spectrogram {
    pub fn frames(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn bins(&self) -> usize {
        self.frame_length / 2 + 1
    }

    pub fn geometry(&self) -> FrameGeometry {
        FrameGeometry::new(self.frame_length, self.hop_length)
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate as f64 / self.frame_length as f64
    }

    /// All-zero spectrogram with the given shape.
    pub fn zeros(frames: usize, geometry: FrameGeometry, sample_rate: u32, signal_length: usize) -> Self {
        let bins = geometry.frame_length / 2 + 1;
        Self {
            magnitudes: vec![vec![0.0; bins]; frames],
            phases: vec![vec![0.0; bins]; frames],
            frame_length: geometry.frame_length,
            hop_length: geometry.hop_length,
            sample_rate,
            signal_length,
        }
    }
}

/// Periodic Hann window (constant overlap-add at hop = N/2, N/4, ...).
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Energy of a frame from its one-sided magnitude spectrum, scaled so that
/// it equals `frame_length` times the energy of the windowed samples.
pub fn one_sided_energy(magnitudes: &[f64], frame_length: usize) -> f64 {
    let half = frame_length / 2;
    magnitudes
        .iter()
        .enumerate()
        .map(|(b, m)| if b == 0 || b == half { m * m } else { 2.0 * m * m })
        .sum()
}

fn check_geometry(frame_length: usize, hop_length: usize) -> Result<()> {
    if frame_length == 0 || !frame_length.is_power_of_two() {
        return Err(AudioError::InvalidFrameLength(frame_length));
    }
    if hop_length == 0 || hop_length > frame_length {
        return Err(AudioError::InvalidHop { frame: frame_length, hop: hop_length });
    }
    Ok(())
}

pub fn stft(w: &Waveform, frame_length: usize, hop_length: usize) -> Result<Spectrogram> {
    check_geometry(frame_length, hop_length)?;
    let len = w.len();
    if len < frame_length {
        return Err(AudioError::SignalTooShort { len, needed: frame_length });
    }
    let geometry = FrameGeometry::new(frame_length, hop_length);
    let frames = geometry.frame_count(len);
    let window = hann_window(frame_length);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame_length);
    let bins = frame_length / 2 + 1;

    let mut magnitudes = Vec::with_capacity(frames);
    let mut phases = Vec::with_capacity(frames);
    let mut buf = vec![Complex::new(0.0, 0.0); frame_length];
    for f in 0..frames {
        let start = f * hop_length;
        for (i, slot) in buf.iter_mut().enumerate() {
            let s = w.samples.get(start + i).copied().unwrap_or(0.0);
            *slot = Complex::new(s * window[i], 0.0);
        }
        fft.process(&mut buf);
        magnitudes.push(buf[..bins].iter().map(|c| c.norm()).collect());
        phases.push(buf[..bins].iter().map(|c| c.arg()).collect());
    }
    Ok(Spectrogram {
        magnitudes,
        phases,
        frame_length,
        hop_length,
        sample_rate: w.sample_rate,
        signal_length: len,
    })
}

/// Weighted overlap-add inverse (least-squares estimate from the modified STFT).
pub fn istft(s: &Spectrogram) -> Result<Waveform> {
    let n = s.frame_length;
    if n == 0 || !n.is_power_of_two() {
        return Err(AudioError::InvalidFrameLength(n));
    }
    if s.hop_length == 0 || s.hop_length > n / 2 {
        return Err(AudioError::InvalidHop { frame: n, hop: s.hop_length });
    }
    let bins = n / 2 + 1;
    let window = hann_window(n);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let total = s.geometry().padded_len(s.signal_length).max(s.signal_length);
    let total = total.max(if s.frames() == 0 { 0 } else { n + (s.frames() - 1) * s.hop_length });
    let mut acc = vec![0.0; total];
    let mut norm = vec![0.0; total];
    let mut buf = vec![Complex::new(0.0, 0.0); n];

    for (f, (mags, phs)) in s.magnitudes.iter().zip(&s.phases).enumerate() {
        for b in 0..bins {
            buf[b] = Complex::from_polar(mags[b], phs[b]);
        }
        // Hermitian symmetry; DC and Nyquist must be real for a real frame.
        buf[0].im = 0.0;
        buf[n / 2].im = 0.0;
        for b in 1..n / 2 {
            buf[n - b] = buf[b].conj();
        }
        ifft.process(&mut buf);
        let start = f * s.hop_length;
        for i in 0..n {
            let frame_sample = buf[i].re / n as f64;
            acc[start + i] += window[i] * frame_sample;
            norm[start + i] += window[i] * window[i];
        }
    }
    // Near the signal edges the summed window power approaches zero; a floor
    // keeps modified spectra from being amplified there.
    let floor = 1e-2 * norm.iter().copied().fold(0.0, f64::max);
    let samples = acc
        .iter()
        .zip(&norm)
        .take(s.signal_length)
        .map(|(a, w)| if *w > 1e-10 { a / w.max(floor) } else { 0.0 })
        .collect();
    Ok(Waveform { samples, sample_rate: s.sample_rate })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, len: usize, sr: u32) -> Waveform {
        let samples = (0..len).map(|i| (2.0 * PI * freq * i as f64 / sr as f64).sin()).collect();
        Waveform::new(samples, sr).unwrap()
    }

    #[test]
    fn zero_signal_zero_magnitudes() {
        let s = stft(&Waveform::silence(4096, 16000), 1024, 256).unwrap();
        assert!(s.magnitudes.iter().flatten().all(|&m| m == 0.0));
        assert_eq!(s.bins(), 513);
        let back = istft(&s).unwrap();
        assert!(back.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sine_peaks_at_expected_bin() {
        // bin = f * N / fs = 1000 * 1024 / 16000 = 64
        let s = stft(&sine(1000.0, 16000, 16000), 1024, 256).unwrap();
        for mags in &s.magnitudes[1..s.frames() - 1] {
            let argmax = mags.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert_eq!(argmax, 64);
        }
    }

    #[test]
    fn roundtrip_interior() {
        let mut rng_state = 12345u64;
        let samples: Vec<f64> = (0..5000)
            .map(|_| {
                rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((rng_state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect();
        let w = Waveform::new(samples, 16000).unwrap();
        let back = istft(&stft(&w, 256, 64).unwrap()).unwrap();
        assert_eq!(back.len(), w.len());
        let interior = 128..w.len() - 128;
        let err: f64 = interior.clone().map(|i| (back.samples[i] - w.samples[i]).powi(2)).sum::<f64>()
            / interior.len() as f64;
        assert!(err.sqrt() < 1e-6, "rms {}", err.sqrt());
    }

    #[test]
    fn single_frame_impulse_reconstructs_impulse() {
        // One frame: y[n] = w[n]·(w[n]·x[n]) / w[n]^2 = x[n] wherever w[n] > 0.
        let mut samples = vec![0.0; 64];
        samples[20] = 1.0;
        let w = Waveform::new(samples.clone(), 8000).unwrap();
        let s = stft(&w, 64, 16).unwrap();
        assert_eq!(s.frames(), 1);
        let back = istft(&s).unwrap();
        for (i, v) in back.samples.iter().enumerate() {
            assert!((v - samples[i]).abs() < 1e-12, "sample {i}: {v}");
        }
    }

    #[test]
    fn parseval_per_frame() {
        let w = sine(440.0, 2048, 16000);
        let window = hann_window(512);
        let s = stft(&w, 512, 128).unwrap();
        for (f, mags) in s.magnitudes.iter().enumerate() {
            let start = f * 128;
            let time_energy: f64 = (0..512)
                .map(|i| (w.samples.get(start + i).copied().unwrap_or(0.0) * window[i]).powi(2))
                .sum();
            let freq_energy = one_sided_energy(mags, 512);
            assert!((freq_energy - 512.0 * time_energy).abs() <= 1e-6 * freq_energy.max(1e-30));
        }
    }

    #[test]
    fn geometry_errors() {
        let w = Waveform::silence(2000, 16000);
        assert!(matches!(stft(&w, 1000, 250), Err(AudioError::InvalidFrameLength(_))));
        assert!(matches!(stft(&w, 1024, 0), Err(AudioError::InvalidHop { .. })));
        assert!(matches!(stft(&Waveform::silence(100, 16000), 1024, 256), Err(AudioError::SignalTooShort { .. })));
        let mut s = stft(&w, 1024, 256).unwrap();
        s.hop_length = 1024;
        assert!(matches!(istft(&s), Err(AudioError::InvalidHop { .. })));
    }
}
