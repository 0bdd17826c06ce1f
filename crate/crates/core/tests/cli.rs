mod common;

use std::process::Command;

use common::*;
use nredit::pipeline::ARTIFACT_NAMES;

#[test]
fn pipeline_writes_manifest_and_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let f = disk_fixture(dir.path(), 1, 32000, 8000);
    let out = dir.path().join("out");
    let status = run_cli(&[
        "pipeline", "--input", p(&f.noisy), "--edit-start", "16000", "--edit-len", "8000", "--op", "replacement",
        "--replacement", p(&f.replacement), "--out", p(&out),
    ]);
    assert_eq!(status, 0);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let listed: Vec<&str> = manifest["artifacts"].as_array().unwrap().iter().map(|a| a["file"].as_str().unwrap()).collect();
    assert_eq!(listed.len(), 8);
    for name in ARTIFACT_NAMES {
        assert!(listed.contains(&format!("{name}.wav").as_str()));
        wav(&out.join(format!("{name}.wav")));
    }
    // Replacement law: len - region + replacement - 2 * fade.
    assert_eq!(wav(&out.join("Y.wav")).len(), 32000 - 8000 + 8000 - 2 * 160);
}

#[test]
fn subcommands_chain_like_the_pipeline_and_runs_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let f = disk_fixture(dir.path(), 2, 20000, 5000);
    let (out, chain) = (dir.path().join("out"), dir.path().join("chain"));
    let (status, chain_statuses) = pipeline_and_chain(&f, 8000, 4000, &out, &chain);
    assert_eq!(status, 0);
    assert!(chain_statuses.iter().all(|&s| s == 0), "{chain_statuses:?}");
    for name in ["X_s", "X_n", "X_l", "X_e_raw", "X_le", "X_e", "Y"] {
        assert!(same_file(&out.join(format!("{name}.wav")), &chain.join(format!("{name}.wav"))), "{name} differs");
    }

    let again = dir.path().join("again");
    let status = run_cli(&[
        "pipeline", "--input", p(&f.noisy), "--out", p(&again), "--edit-start", "8000", "--edit-len", "4000", "--op",
        "replacement", "--replacement", p(&f.replacement),
    ]);
    assert_eq!(status, 0);
    assert!(same_file(&out.join("Y.wav"), &again.join("Y.wav")));
    assert!(same_file(&out.join("manifest.json"), &again.join("manifest.json")));
}

#[test]
fn oracle_identity_pipeline_returns_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let f = disk_fixture(dir.path(), 3, 12000, 100);
    let config = dir.path().join("c.toml");
    std::fs::write(&config, "[suppress]\nenabled = false\n[refine]\nenabled = false\n[editor]\nkind = \"splice\"\ncrossfade_ms = 0\n").unwrap();
    let out = dir.path().join("out");
    let status = run_cli(&[
        "pipeline", "--config", p(&config), "--input", p(&f.noisy), "--reference", p(&f.clean), "--out", p(&out),
        "--edit-start", "5000", "--op", "replacement",
    ]);
    // Replacement without material is a usage-level script error, reported by the edit stage.
    assert_eq!(status, 2);
    let empty = dir.path().join("empty.wav");
    nredit::audio::write_wav(&nredit::Waveform::silence(0, 16000), &empty, Default::default()).unwrap();
    let status = run_cli(&[
        "pipeline", "--config", p(&config), "--input", p(&f.noisy), "--reference", p(&f.clean), "--out", p(&out),
        "--edit-start", "5000", "--op", "replacement", "--replacement", p(&empty),
    ]);
    assert_eq!(status, 0);
    assert_eq!(wav(&out.join("Y.wav")), f.fixture.noisy);
}

#[test]
fn analyze_reports_csv() {
    let dir = tempfile::tempdir().unwrap();
    let f = disk_fixture(dir.path(), 4, 16000, 100);
    let csv = dir.path().join("m.csv");
    let json = dir.path().join("m.json");
    assert_eq!(
        run_cli(&["analyze", "--input", p(&f.noisy), "--reference", p(&f.clean), "--csv", p(&csv), "--json", p(&json), "--boundary", "8000"]),
        0
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("stage,metric,frame_index,value"));
    let snr_line = text.lines().find(|l| l.starts_with("noisy,snr_db,,")).unwrap();
    let snr: f64 = snr_line.rsplit(',').next().unwrap().parse().unwrap();
    assert!((snr - 5.0).abs() < 0.01, "{snr}");
    assert!(text.contains("noisy,centroid_hz,0,"));
    assert!(text.contains("noisy,boundary_discontinuity@8000"));
    assert!(std::fs::read_to_string(&json).unwrap().contains("\"snr_db\""));
}

#[test]
fn fixtures_subcommand_writes_exact_mixes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_cli(&["fixtures", "--out", p(dir.path()), "--count", "1", "--seconds", "0.25", "--seed", "7"]), 0);
    let index: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("index.json")).unwrap()).unwrap();
    let entries = index.as_array().unwrap();
    assert_eq!(entries.len(), 6);
    for e in entries {
        let name = e["name"].as_str().unwrap();
        let (c, n, x) = (
            wav(&dir.path().join(format!("{name}_clean.wav"))),
            wav(&dir.path().join(format!("{name}_noise.wav"))),
            wav(&dir.path().join(format!("{name}_noisy.wav"))),
        );
        assert_eq!(x.len(), 4000);
        for i in 0..x.len() {
            assert_eq!(c.samples[i] + n.samples[i], x.samples[i]);
        }
    }
}

#[test]
fn suppress_accepts_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let f = disk_fixture(dir.path(), 5, 2000, 100);
    let out = dir.path().join("l.wav");
    let config = dir.path().join("c.toml");
    std::fs::write(&config, "[suppress]\nmax_iterations = 2\n").unwrap();
    assert_eq!(run_cli(&["suppress", "--config", p(&config), "--input", p(&f.noisy), "--output", p(&out), "--b", "1", "--a", "1"]), 0);
    assert_eq!(wav(&out).len(), 2000);
    assert_eq!(run_cli(&["suppress", "--input", p(&f.noisy), "--output", p(&out), "--b", "1,x", "--a", "1"]), 1);
    assert_eq!(run_cli(&["suppress", "--input", p(&f.noisy), "--output", p(&out), "--b", "1", "--a", "2,-0.5"]), 2);
}

#[test]
fn usage_and_stage_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_cli(&["frobnicate"]), 1);
    assert_eq!(run_cli(&[]), 1);
    assert_eq!(run_cli(&["separate", "--input", "x.wav"]), 1);
    assert_eq!(run_cli(&["--help"]), 0);

    let junk = dir.path().join("junk.wav");
    std::fs::write(&junk, b"RIFF\x10\x00\x00\x00WAVEfmt garbage").unwrap();
    let out = dir.path().join("o.wav");
    assert_eq!(run_cli(&["separate", "--input", p(&junk), "--speech-out", p(&out), "--noise-out", p(&out)]), 2);
    assert_eq!(run_cli(&["separate", "--input", "/nonexistent.wav", "--speech-out", p(&out), "--noise-out", p(&out)]), 2);
    let bad_config = dir.path().join("bad.toml");
    std::fs::write(&bad_config, "[refine]\nheads = 5\n").unwrap();
    assert_eq!(run_cli(&["analyze", "--config", p(&bad_config), "--input", p(&junk)]), 2);
}

#[test]
fn binary_reads_config_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let f = disk_fixture(dir.path(), 6, 3000, 100);
    let bad_config = dir.path().join("bad.toml");
    std::fs::write(&bad_config, "[analysis]\nhop_length = 0\n").unwrap();
    let bin = env!("CARGO_BIN_EXE_nredit");
    let status = Command::new(bin).args(["analyze", "--input", p(&f.noisy)]).env("NREDIT_CONFIG", &bad_config).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&status.stderr).contains("[config]"));
    let ok = Command::new(bin).args(["analyze", "--input", p(&f.noisy)]).env_remove("NREDIT_CONFIG").output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).starts_with("stage,metric,frame_index,value"));
    let unknown = Command::new(bin).arg("frobnicate").output().unwrap();
    assert_eq!(unknown.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("Usage"));
}
