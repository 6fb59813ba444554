use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use triage_core::ingest::synthetic::lane_script;
use triage_core::ingest::Archetype;

fn triage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_triage"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn triage")
}

fn ok(args: &[&str]) -> String {
    let out = triage(args);
    assert!(
        out.status.success(),
        "triage {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn dataset_workflow_from_synthetic_corpus_to_report() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    let plan = dir.path().join("split.csv");
    let resplit = dir.path().join("split2.csv");
    let export = dir.path().join("export");
    let preds = dir.path().join("pred.csv");
    let preds2 = dir.path().join("pred2.csv");

    let out = ok(&["synth", "--per-pattern", "1", "--frames", "48", "--seed", "3", "--out", s(&root)]);
    assert!(out.contains("5 video(s)"), "{out}");
    assert!(root.join("manifest.csv").is_file());

    let table = ok(&["dataset", "build", "--root", s(&root), "--quota", "10", "--seed", "1", "--out", s(&plan)]);
    for class in ["safe", "evacuation", "call_for_help", "emergency"] {
        let row = table.lines().find(|l| l.starts_with(class)).unwrap();
        let counts: Vec<&str> = row.split_whitespace().skip(1).collect();
        assert_eq!(counts, ["8", "1", "1"], "{table}");
    }
    ok(&["dataset", "split", "--root", s(&root), "--plan", s(&plan), "--seed", "9", "--out", s(&resplit)]);
    let keys = |p: &Path| {
        let mut v: Vec<String> = std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter_map(|l| l.rsplit_once(',').map(|(key, _)| key.to_string()))
            .collect();
        v.sort();
        v
    };
    assert_eq!(keys(&plan), keys(&resplit));

    ok(&[
        "dataset", "export", "--root", s(&root), "--plan", s(&plan), "--out", s(&export), "--set", "epochs=3",
    ]);
    let manifest = std::fs::read_to_string(export.join("training_manifest.txt")).unwrap();
    assert!(manifest.contains("epochs=3"));
    let clip_dirs: usize = ["train", "val", "test"]
        .iter()
        .flat_map(|sp| std::fs::read_dir(export.join(sp)).unwrap())
        .map(|class| std::fs::read_dir(class.unwrap().path()).unwrap().count())
        .sum();
    assert_eq!(clip_dirs, 40);

    ok(&["dataset", "predict", "--root", s(&root), "--plan", s(&plan), "--out", s(&preds)]);
    ok(&["dataset", "predict", "--root", s(&root), "--plan", s(&resplit), "--out", s(&preds2)]);
    let rows = std::fs::read_to_string(&preds).unwrap().lines().count();
    assert_eq!(rows, 1 + 4);

    let text = ok(&["eval", "--pred", s(&preds), "--pred", s(&preds2)]);
    assert!(text.contains("recall over 2 run(s)"), "{text}");
    let json: Value = serde_json::from_str(&ok(&["eval", "--pred", s(&preds), "--format", "json"])).unwrap();
    assert_eq!(json["aggregate"]["runs"], 1);
    let csv = ok(&[
        "eval", "--pred", s(&preds), "--compare-pred", s(&preds2), "--labels", "first,second", "--format", "csv",
    ]);
    assert!(csv.starts_with("class,first,second,delta_pp"), "{csv}");
    assert!(!triage(&["eval", "--pred", s(&preds), "--format", "csv"]).status.success());
}

#[test]
fn run_writes_records_and_final_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let script = lane_script(4, "cli", 384, 216, 40, &[Archetype::Stander, Archetype::Prone]).unwrap();
    std::fs::write(dir.path().join("scene.toml"), script.to_toml()).unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "source_script = \"scene.toml\"\ndrop_policy = \"block\"\n").unwrap();
    let records = dir.path().join("records.ndjson");

    let stdout = ok(&["run", "--config", s(&config), "--seed", "11", "--records", s(&records)]);
    let metrics: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(metrics["frames_in"], 40);
    assert_eq!(metrics["frames_dropped"], 0);
    let lines: Vec<Value> = std::fs::read_to_string(&records)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len() as u64, metrics["results_published"].as_u64().unwrap());
    assert!(lines.iter().all(|r| r["video_id"] == "cli"));
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let out = triage(&["eval", "--pred", "/nonexistent/pred.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/pred.csv"));
    let out = triage(&["run", "--config", "/nonexistent/run.toml"]);
    assert!(!out.status.success());
    assert!(!triage(&["synth", "--out", "/tmp/x", "--cast", "dancer", "--per-pattern", "1"]).status.success());
}
