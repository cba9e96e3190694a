use std::fs;
use std::process::Command;

use tempfile::TempDir;

use hoi_core::config::EngineConfig;
use hoi_core::ingest::{load_statistics, render_statistics};
use hoi_core::session::{layout, DataRoot};
use hoi_core::synth::demo_ontology;
use hoi_server::cli::{
    build_stats, gen_demo, ingest_check, parse_log, render_log, report_metrics, run_oracle, simulate, train, ScoreKind,
};

fn demo(scores: ScoreKind) -> (TempDir, DataRoot) {
    let tmp = TempDir::new().unwrap();
    let root = DataRoot::new(tmp.path());
    gen_demo(&root, "demo", 1, 3, scores).unwrap();
    (tmp, root)
}

#[test]
fn ingest_check_reports_the_clip_and_missing_assets() {
    let (_tmp, root) = demo(ScoreKind::Perfect);
    let report = ingest_check(&root, "demo").unwrap();
    assert_eq!(report.reference_events, Some(6));
    assert_eq!(report.tracks, 2);
    fs::remove_file(root.clip_dir("demo").join(layout::STATISTICS)).unwrap();
    let err = ingest_check(&root, "demo").unwrap_err();
    assert!(err.to_string().contains("statistics"), "{err}");
}

#[test]
fn build_stats_reproduces_the_generated_bundle() {
    let (_tmp, root) = demo(ScoreKind::Perfect);
    let path = root.clip_dir("demo").join(layout::STATISTICS);
    let ont = demo_ontology();
    let before = load_statistics(&path, &ont).unwrap();
    let rebuilt = build_stats(&root, "demo", None, before.bins()).unwrap();
    assert_eq!(render_statistics(&rebuilt, &ont), render_statistics(&before, &ont));
    assert_eq!(load_statistics(&path, &ont).unwrap(), before);
}

#[test]
fn oracle_edits_follow_the_scores() {
    let (_tmp, root) = demo(ScoreKind::Perfect);
    let report = run_oracle(&root, "demo", EngineConfig::default()).unwrap();
    assert_eq!((report.events, report.edits), (6, 0));
    assert_eq!(report.zero_edit_rate, Some(1.0));

    let (_tmp, root) = demo(ScoreKind::Adversarial);
    let report = run_oracle(&root, "demo", EngineConfig::default()).unwrap();
    assert_eq!(report.edits, 3 * 6);
    assert_eq!(report.metrics.accuracy.unwrap().complete_match_rate, Some(1.0));
}

#[test]
fn simulated_log_reports_the_same_metrics() {
    let (_tmp, root) = demo(ScoreKind::Perfect);
    let (report, log) = simulate(&root, "demo", EngineConfig::default()).unwrap();
    assert_eq!(report.complete_events, 6);
    assert_eq!(report.metrics.behavior.confirmed_field_violations, 0);
    let path = root.path().join("log.jsonl");
    fs::write(&path, render_log(&log).unwrap()).unwrap();
    assert_eq!(parse_log(&fs::read_to_string(&path).unwrap()).unwrap(), log);
    let metrics = report_metrics(&root, None, Some(&path), Some("demo")).unwrap();
    assert_eq!(metrics, report.metrics);
}

#[test]
fn training_lowers_the_loss_and_sessions_pick_up_the_adapter() {
    let (_tmp, root) = demo(ScoreKind::None);
    let report = train(&root, "demo", EngineConfig::default(), 150, 0.3, 0).unwrap();
    assert!(report.final_loss < 0.5 * report.initial_loss, "{report:?}");
    assert!(report.adapter.is_file());
    let (sim, _) = simulate(&root, "demo", EngineConfig::default()).unwrap();
    assert_eq!(sim.complete_events, 6);
}

#[test]
fn binary_runs_the_batch_commands() {
    let tmp = TempDir::new().unwrap();
    let hoi = env!("CARGO_BIN_EXE_hoi");
    let run = |args: &[&str]| {
        let out = Command::new(hoi).env("HOI_DATA_ROOT", tmp.path()).args(args).output().unwrap();
        (out.status.success(), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
    };
    let (ok, _, err) = run(&["gen-demo", "--events-per-hand", "2"]);
    assert!(ok, "{err}");
    let (ok, out, _) = run(&["ingest-check", "--clip", "demo"]);
    assert!(ok);
    let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["reference_events"], 4);
    let (ok, out, _) = run(&["run-oracle", "--clip", "demo", "--csv"]);
    assert!(ok);
    assert!(out.lines().any(|l| l == "accuracy.complete_match_rate,1.0"), "{out}");
    let log = tmp.path().join("sim.jsonl");
    let (ok, _, err) = run(&["simulate-session", "--clip", "demo", "--log", log.to_str().unwrap()]);
    assert!(ok, "{err}");
    let (ok, out, _) = run(&["report-metrics", "--log", log.to_str().unwrap()]);
    assert!(ok);
    let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["behavior"]["events"], 4);

    let (ok, _, err) = run(&["ingest-check", "--clip", "missing"]);
    assert!(!ok);
    assert!(err.contains("missing"), "{err}");
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"controller": {"lambda": [1, 1, 1, -1]}}"#).unwrap();
    let (ok, _, err) = run(&["--config", bad.to_str().unwrap(), "run-oracle", "--clip", "demo"]);
    assert!(!ok);
    assert!(err.starts_with("error:"), "{err}");
}
