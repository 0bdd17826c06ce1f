#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nredit::audio::{read_wav, write_wav, WavEncoding};
use nredit::fixtures::{fixture, harmonic_speech, Fixture, NoiseColor};
use nredit::Waveform;

pub fn run_cli(args: &[&str]) -> i32 {
    let argv: Vec<String> = std::iter::once("nredit").chain(args.iter().copied()).map(String::from).collect();
    nredit::cli::cli_main(argv)
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// A fixture on disk: `noisy.wav`, `clean.wav` and a replacement clip.
pub struct DiskFixture {
    pub fixture: Fixture,
    pub noisy: PathBuf,
    pub clean: PathBuf,
    pub replacement: PathBuf,
    pub replacement_len: usize,
}

pub fn disk_fixture(dir: &Path, seed: u64, len: usize, replacement_len: usize) -> DiskFixture {
    let fixture = fixture(seed, len, 5.0, NoiseColor::White);
    let noisy = dir.join("noisy.wav");
    let clean = dir.join("clean.wav");
    let replacement = dir.join("replacement.wav");
    write_wav(&fixture.noisy, &noisy, WavEncoding::Pcm16).unwrap();
    write_wav(&fixture.clean, &clean, WavEncoding::Pcm16).unwrap();
    write_wav(&harmonic_speech(seed + 1000, replacement_len, 16000), &replacement, WavEncoding::Pcm16).unwrap();
    DiskFixture { fixture, noisy, clean, replacement, replacement_len }
}

pub fn wav(path: &Path) -> Waveform {
    read_wav(path).unwrap()
}

pub fn same_file(a: &Path, b: &Path) -> bool {
    std::fs::read(a).unwrap() == std::fs::read(b).unwrap()
}

/// Runs `pipeline` into `out` and, separately, the same stages as chained
/// subcommands into `chain`. Returns the two exit statuses.
pub fn pipeline_and_chain(f: &DiskFixture, start: usize, len: usize, out: &Path, chain: &Path) -> (i32, Vec<i32>) {
    let (start_s, len_s) = (start.to_string(), len.to_string());
    let edit = ["--edit-start", &start_s, "--edit-len", &len_s, "--op", "replacement", "--replacement", p(&f.replacement)];
    let mut args = vec!["pipeline", "--input", p(&f.noisy), "--out", p(out)];
    args.extend_from_slice(&edit);
    let pipeline_status = run_cli(&args);

    std::fs::create_dir_all(chain).unwrap();
    let c = |name: &str| chain.join(name);
    let (x_s, x_n, x_l, x_e_raw, x_le, x_e, y) =
        (c("X_s.wav"), c("X_n.wav"), c("X_l.wav"), c("X_e_raw.wav"), c("X_le.wav"), c("X_e.wav"), c("Y.wav"));
    let mut statuses = vec![
        run_cli(&["separate", "--input", p(&f.noisy), "--speech-out", p(&x_s), "--noise-out", p(&x_n)]),
        run_cli(&["suppress", "--input", p(&x_s), "--output", p(&x_l)]),
    ];
    let mut e1 = vec!["edit", "--input", p(&x_s), "--output", p(&x_e_raw)];
    e1.extend_from_slice(&edit);
    statuses.push(run_cli(&e1));
    let mut e2 = vec!["edit", "--input", p(&x_l), "--output", p(&x_le)];
    e2.extend_from_slice(&edit);
    statuses.push(run_cli(&e2));
    statuses.push(run_cli(&["refine", "--input", p(&x_e_raw), "--context", p(&x_le), "--output", p(&x_e)]));
    statuses.push(run_cli(&["recombine", "--speech", p(&x_e), "--noise", p(&x_n), "--output", p(&y), "--anchor", &start_s]));
    (pipeline_status, statuses)
}
