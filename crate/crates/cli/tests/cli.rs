use std::path::Path;
use std::process::{Command, Output};

fn quotereel(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quotereel"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn synth(dir: &Path) {
    ok(&quotereel(dir, &["synth", "--out", "."]));
}

#[test]
fn verbs_run_in_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    for verb in ["ingest", "train", "retrieve", "assemble", "evaluate"] {
        ok(&quotereel(d, &[verb]));
    }
    let out = d.join("out");
    for f in [
        "clips.tsv",
        "narrators.tsv",
        "model/model.toml",
        "loss_history.csv",
        "report.csv",
        "plots/recall_at_k.tsv",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    for a in ["0", "0.5", "1", "2"] {
        assert!(out.join(format!("loss_history_alpha{a}.csv")).is_file());
    }
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.starts_with("doc_id,qdi,"));
    assert!(report.lines().last().unwrap().starts_with("MEAN,"));
}

#[test]
fn seed_flag_is_reproducible() {
    let runs: Vec<Vec<u8>> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            synth(dir.path());
            ok(&quotereel(dir.path(), &["--seed", "11", "run"]));
            std::fs::read(dir.path().join("out/model/fusion_layer1.vec")).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn text_variant_runs_without_training() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    ok(&quotereel(dir.path(), &["--variant", "T", "run"]));
    assert!(!dir.path().join("out/model").exists());
    assert!(dir.path().join("out/edl/doc00.edl.csv").is_file());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // no config file
    assert_eq!(quotereel(d, &["ingest"]).status.code(), Some(2));
    synth(d);
    // bad variant is a usage error
    assert_eq!(
        quotereel(d, &["--variant", "X", "ingest"]).status.code(),
        Some(2)
    );
    // invalid setting is caught before any output is written
    let cfg = std::fs::read_to_string(d.join("quotereel.toml")).unwrap();
    std::fs::write(
        d.join("bad.toml"),
        cfg.replace("patience = 10", "patience = 10\nlearning_rate_typo = 1"),
    )
    .unwrap();
    assert_eq!(
        quotereel(d, &["--config", "bad.toml", "ingest"])
            .status
            .code(),
        Some(2)
    );
    assert!(!d.join("out").exists());
    // malformed transcript is a data error
    std::fs::write(d.join("transcripts/doc00.tsv"), "not a transcript\n").unwrap();
    let out = quotereel(d, &["ingest"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("doc00.tsv"));
}
