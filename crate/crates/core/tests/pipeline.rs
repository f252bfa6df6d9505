use std::path::Path;

use quotereel::pipeline::{run_all, write_demo_corpus, PipelineConfig};
use quotereel::synthetic::DemoConfig;

fn run(dir: &Path) -> PipelineConfig {
    let cfg_path = write_demo_corpus(dir, &DemoConfig::default()).unwrap();
    let cfg = PipelineConfig::load(&cfg_path).unwrap();
    run_all(&cfg, false).unwrap();
    cfg
}

#[test]
fn demo_corpus_runs_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = run(dir.path());
    let out = &cfg.paths.output;
    for f in [
        "clips.tsv",
        "samples.tsv",
        "clip_frames.vec",
        "model/model.toml",
        "loss_history.csv",
        "report.csv",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    eprintln!("{report}");
    assert_eq!(report.lines().count(), 1 + 4 + 1);
    assert!(out.join("plots/recall_at_k.tsv").is_file());
    assert!(out.join("loss_history_alpha0.5.csv").is_file());
}

#[test]
fn invalid_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_demo_corpus(dir.path(), &DemoConfig::default()).unwrap();
    let text = std::fs::read_to_string(&cfg_path)
        .unwrap()
        .replace("batch_size = 8", "batch_size = 0");
    let cfg = PipelineConfig::from_toml(&text, dir.path()).unwrap();
    assert!(matches!(
        run_all(&cfg, false),
        Err(quotereel::Error::Config(_))
    ));
    assert!(!cfg.paths.output.exists());
}

#[test]
fn missing_inputs_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_demo_corpus(dir.path(), &DemoConfig::default()).unwrap();
    let cfg = PipelineConfig::load(&cfg_path).unwrap();
    // nothing ingested yet
    assert!(matches!(
        quotereel::pipeline::train_model(&cfg),
        Err(quotereel::Error::Config(_))
    ));
    quotereel::pipeline::ingest(&cfg).unwrap();
    // TV retrieval without a trained model
    let script = dir.path().join("scripts/doc00.txt");
    assert!(matches!(
        quotereel::pipeline::retrieve(&cfg, &script),
        Err(quotereel::Error::Config(_))
    ));
    let mut t = cfg.clone();
    t.variant = quotereel::embedding::RetrievalVariant::T;
    let fulfilled = quotereel::pipeline::retrieve(&t, &script).unwrap();
    assert!(std::fs::read_to_string(fulfilled)
        .unwrap()
        .contains("<SOQ>"));
}
