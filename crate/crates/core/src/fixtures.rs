//! Seeded synthetic corpus: vowel-like harmonic signals mixed with white or
//! pink noise at a chosen SNR. All outputs are deterministic in the seed.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::audio::Waveform;

pub const FIXTURE_RATE: u32 = 16000;
pub const FIXTURE_SNRS_DB: [f64; 3] = [0.0, 5.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseColor {
    White,
    Pink,
}

/// Harmonic signal: fundamental in 120-220 Hz, five harmonics with `1/h`
/// amplitudes, slow pitch drift and a syllabic amplitude envelope. Peak 0.5.
pub fn harmonic_speech(seed: u64, len: usize, sample_rate: u32) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f0: f64 = rng.random_range(120.0..220.0);
    let drift: f64 = rng.random_range(-0.05..0.05);
    let syllable_hz: f64 = rng.random_range(3.0..5.0);
    let phases: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let gains: Vec<f64> = (1..=5).map(|h| rng.random_range(0.7..1.0) / h as f64).collect();
    let sr = sample_rate as f64;
    let dur = len as f64 / sr;

    let mut phase = 0.0;
    let mut samples: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 / sr;
            let f = f0 * (1.0 + drift * (t / dur.max(1e-9) - 0.5));
            phase += 2.0 * PI * f / sr;
            let env = 0.55 - 0.45 * (2.0 * PI * syllable_hz * t).cos();
            let fade = (t / 0.02).min(1.0) * ((dur - t) / 0.02).clamp(0.0, 1.0);
            let tone: f64 = gains
                .iter()
                .zip(&phases)
                .enumerate()
                .map(|(h, (g, p))| g * ((h + 1) as f64 * phase + p).sin())
                .sum();
            env * fade * tone
        })
        .collect();
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        samples.iter_mut().for_each(|s| *s *= 0.5 / peak);
    }
    Waveform { samples, sample_rate }
}

pub fn noise(seed: u64, len: usize, sample_rate: u32, color: NoiseColor) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let white: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    let samples = match color {
        NoiseColor::White => white,
        NoiseColor::Pink => {
            // Paul Kellet's economy pink filter.
            let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
            white
                .into_iter()
                .map(|w| {
                    b0 = 0.99765 * b0 + w * 0.0990460;
                    b1 = 0.96300 * b1 + w * 0.2965164;
                    b2 = 0.57000 * b2 + w * 1.0526913;
                    b0 + b1 + b2 + w * 0.1848
                })
                .collect()
        }
    };
    Waveform { samples, sample_rate }
}

fn power(w: &[f64]) -> f64 {
    w.iter().map(|s| s * s).sum::<f64>() / w.len().max(1) as f64
}

/// Scales `noise` so that `clean` over it has the requested SNR.
pub fn scale_to_snr(clean: &Waveform, noise: &Waveform, snr_db: f64) -> Waveform {
    let pc = power(&clean.samples);
    let pn = power(&noise.samples);
    let gain = if pn > 0.0 { (pc / (pn * 10f64.powf(snr_db / 10.0))).sqrt() } else { 0.0 };
    Waveform { samples: noise.samples.iter().map(|s| s * gain).collect(), sample_rate: noise.sample_rate }
}

/// Rounds to the PCM16 grid (what a 16-bit WAV round trip would produce).
pub fn quantize_pcm16(w: &Waveform) -> Waveform {
    Waveform {
        samples: w
            .samples
            .iter()
            .map(|s| (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) / 32768.0)
            .collect(),
        sample_rate: w.sample_rate,
    }
}

/// One noisy utterance with its known components. `noisy == clean + noise`
/// exactly: all three are on the PCM16 grid.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: String,
    pub clean: Waveform,
    pub noise: Waveform,
    pub noisy: Waveform,
    pub snr_db: f64,
    pub color: NoiseColor,
}

pub fn fixture(seed: u64, len: usize, snr_db: f64, color: NoiseColor) -> Fixture {
    let mut clean = quantize_pcm16(&harmonic_speech(seed, len, FIXTURE_RATE));
    let raw = noise(seed.wrapping_add(1), len, FIXTURE_RATE, color);
    let mut n = scale_to_snr(&clean, &raw, snr_db);
    // Keep the mix inside [-1, 1] so every component stays on the grid exactly;
    // both parts are scaled together to preserve the SNR.
    let peak = clean.samples.iter().zip(&n.samples).fold(0.0f64, |m, (c, x)| m.max((c + x).abs()));
    if peak > 0.99 {
        let g = 0.99 / peak;
        clean = quantize_pcm16(&Waveform { samples: clean.samples.iter().map(|s| s * g).collect(), sample_rate: FIXTURE_RATE });
        n = scale_to_snr(&clean, &raw, snr_db);
    }
    let noise = quantize_pcm16(&n);
    let noisy = Waveform {
        samples: clean.samples.iter().zip(&noise.samples).map(|(c, n)| c + n).collect(),
        sample_rate: FIXTURE_RATE,
    };
    let color_name = match color {
        NoiseColor::White => "white",
        NoiseColor::Pink => "pink",
    };
    Fixture {
        name: format!("fx{seed:03}_{color_name}_{snr_db:+.0}dB"),
        clean,
        noise,
        noisy,
        snr_db,
        color,
    }
}

/// The default corpus: `count` seeds crossed with white/pink noise at 0/5/10 dB.
pub fn corpus(base_seed: u64, count: usize, len: usize) -> Vec<Fixture> {
    let mut out = Vec::new();
    for i in 0..count as u64 {
        for color in [NoiseColor::White, NoiseColor::Pink] {
            for snr in FIXTURE_SNRS_DB {
                out.push(fixture(base_seed + i, len, snr, color));
            }
        }
    }
    out
}
