use std::fs;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crossadapt"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn usage_errors_exit_2_and_help_exits_0() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["score", "--ref", "x"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.txt");
    let o = run(&[
        "score",
        "--ref",
        missing.to_str().unwrap(),
        "--hyp",
        missing.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}

#[test]
fn score_reports_wer() {
    let dir = tempfile::tempdir().unwrap();
    let (r, h, h2) = (
        dir.path().join("ref.txt"),
        dir.path().join("hyp.txt"),
        dir.path().join("hyp2.txt"),
    );
    fs::write(&r, "The cat sat.\nOn the mat\n").unwrap();
    fs::write(&h, "the CAT sat\non the mat!\n").unwrap();
    fs::write(&h2, "the dog sat\non mat\n").unwrap();
    let o = run(&[
        "score",
        "--ref",
        r.to_str().unwrap(),
        "--hyp",
        h.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("WER 0.00"), "{}", stdout(&o));
    // One substitution and one deletion over six reference words.
    let o = run(&[
        "score",
        "--ref",
        r.to_str().unwrap(),
        "--hyp",
        h2.to_str().unwrap(),
    ]);
    assert!(stdout(&o).starts_with("WER 33.33"), "{}", stdout(&o));
    assert!(stdout(&o).contains("S=1 D=1 I=0 N=6"), "{}", stdout(&o));
}

#[test]
fn swap_ivec_requires_override_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("none.toml");
    let o = run(&[
        "swap-ivec",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--override-fingerprint"));
}

#[test]
fn synth_stats_and_ablate_produce_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(
        &spec,
        "source_minutes = 0.4\nbroadcast_minutes = 0.3\ntarget_train_minutes = 0.2\ntarget_test_minutes = 0.2\nbroadcast_test_minutes = 0.2\nnoise_seconds = 3.0\n",
    )
    .unwrap();
    let bench = dir.path().join("bench");
    let o = run(&[
        "synth",
        "--out",
        bench.to_str().unwrap(),
        "--config",
        spec.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(bench.join("run_manifest.json").exists());

    let manifest = bench.join("corpora/source/manifest.jsonl");
    let o = run(&["stats", manifest.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!stdout(&o).is_empty());

    // Shrink training so the ablation finishes quickly.
    let cfg_path = bench.join("pipeline.toml");
    let cfg = fs::read_to_string(&cfg_path)
        .unwrap()
        .replace("epochs = 30", "epochs = 1")
        .replace("epochs = 3", "epochs = 1");
    fs::write(&cfg_path, cfg).unwrap();
    let out = dir.path().join("ablate");
    let o = run(&[
        "ablate",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--setups",
        "Baseline Broadcast,Removing Stage 2",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let table = fs::read_to_string(out.join("ablation.txt")).unwrap();
    assert!(
        table.contains("Baseline Broadcast") && table.contains("Removing Stage 2"),
        "{table}"
    );
    assert!(table.contains("WER Oral History"), "{table}");
    assert_eq!(
        fs::read_to_string(out.join("ablation.ndjson"))
            .unwrap()
            .lines()
            .count(),
        4
    );
    assert!(out.join("resolved_config.toml").exists() && out.join("run_manifest.json").exists());
}
