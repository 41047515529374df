use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use robkit_core::dataset::read_instances;
use robkit_core::eval::EvalReport;
use robkit_llm::{parse_verdict, write_log, LogEntry, LogHeader, RunOutput};
use serde_json::{json, Value};

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn robkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robkit"))
        .current_dir(workspace())
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|_| panic!("stderr: {}", String::from_utf8_lossy(&out.stderr)))
}

fn toy_pipeline(run_dir: &Path) -> Value {
    let dir = run_dir.to_str().unwrap();
    stdout_json(&robkit(&["--config", "data/toy/robkit.toml", "--run-dir", dir, "pipeline"]))
}

#[test]
fn toy_pipeline_is_consistent_and_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let summary = toy_pipeline(a.path());
    assert_eq!(summary["stage"], "pipeline");

    let annotate = summary["stages"].as_array().unwrap().iter().find(|s| s["stage"] == "annotate").unwrap();
    let stats = &annotate["stats"];
    assert_eq!(
        stats["rows_in"].as_u64().unwrap(),
        stats["instances"].as_u64().unwrap() + stats["rejects"].as_u64().unwrap()
    );

    let instances = read_instances(&a.path().join("dataset/instances.jsonl")).unwrap();
    assert!(instances.iter().all(|i| i.slice_ok() && i.provenance.similarity > 0.5));
    let test = read_instances(&a.path().join("dataset/test.jsonl")).unwrap();

    let report: EvalReport = serde_json::from_str(&fs::read_to_string(a.path().join("reports/report.json")).unwrap()).unwrap();
    let models: Vec<&str> = report.models.iter().map(|m| m.model.as_str()).collect();
    for m in ["tfidf-lr", "tfidf-svm", "tiny-ext", "tiny-gen"] {
        assert!(models.contains(&m), "{m} missing from {models:?}");
    }
    for m in &report.models {
        assert_eq!(m.overall().n, test.len());
        assert_eq!(m.runs.len(), 2);
        for b in &m.blocks {
            // confusion counts are summed over runs
            assert_eq!(b.classification.confusion.total(), b.n * m.runs.len(), "{} {}", m.model, b.scope);
        }
    }

    let manifest: Value = serde_json::from_str(&fs::read_to_string(a.path().join("manifest.json")).unwrap()).unwrap();
    for stage in ["ingest", "parse-reviews", "index", "annotate", "split", "eval", "report"] {
        assert!(manifest["stages"].get(stage).is_some(), "manifest lacks {stage}");
    }

    let b = tempfile::tempdir().unwrap();
    toy_pipeline(b.path());
    for file in ["dataset/instances.jsonl", "dataset/split.json", "reports/report.json", "manifest.json"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file} differs");
    }
}

#[test]
fn annotate_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().to_str().unwrap();
    let base = ["--config", "data/toy/robkit.toml", "--run-dir", run];
    for stage in ["ingest", "parse-reviews", "index", "annotate"] {
        stdout_json(&robkit(&[&base[..], &[stage]].concat()));
    }
    let first = fs::read(dir.path().join("dataset/instances.jsonl")).unwrap();
    stdout_json(&robkit(&[&base[..], &["annotate"]].concat()));
    assert_eq!(first, fs::read(dir.path().join("dataset/instances.jsonl")).unwrap());
}

#[test]
fn stricter_threshold_yields_fewer_instances() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().to_str().unwrap();
    let base = ["--config", "data/toy/robkit.toml", "--run-dir", run];
    for stage in ["ingest", "parse-reviews", "index"] {
        stdout_json(&robkit(&[&base[..], &[stage]].concat()));
    }
    let strict = stdout_json(&robkit(&[&base[..], &["--threshold", "0.95", "annotate"]].concat()));
    let loose = stdout_json(&robkit(&[&base[..], &["annotate"]].concat()));
    assert!(strict["stats"]["instances"].as_u64() < loose["stats"]["instances"].as_u64());
}

#[test]
fn missing_dataset_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere/test.jsonl");
    let out = robkit(&["--run-dir", dir.path().to_str().unwrap(), "eval", "--dataset", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "missing_input");
    assert!(err["path"].as_str().unwrap().contains("nowhere/test.jsonl"));
}

#[test]
fn usage_and_config_errors_exit_3() {
    let out = robkit(&["eval", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "validation");

    let out = robkit(&["--threshold", "1.5", "index", "stats"]);
    assert_eq!(out.status.code(), Some(3));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "seed = 1\nunknown_key = 2\n").unwrap();
    let out = robkit(&["--config", cfg.to_str().unwrap(), "index", "stats"]);
    assert_eq!(out.status.code(), Some(3));

    assert_eq!(robkit(&["--help"]).status.code(), Some(0));
}

#[test]
fn report_refuses_mixed_configurations_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    toy_pipeline(dir.path());
    let run = dir.path().to_str().unwrap();
    let meta = dir.path().join("predictions/tfidf-lr.run0.jsonl.meta.json");
    let mut m: Value = serde_json::from_str(&fs::read_to_string(&meta).unwrap()).unwrap();
    m["config_hash"] = json!("0".repeat(64));
    fs::write(&meta, m.to_string()).unwrap();

    let base = ["--config", "data/toy/robkit.toml", "--run-dir", run];
    let out = robkit(&[&base[..], &["report"]].concat());
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("different configurations"));

    let forced = stdout_json(&robkit(&[&base[..], &["report", "--force"]].concat()));
    assert_eq!(forced["mixed_configs"], true);
}

#[test]
fn llm_replay_scores_a_recorded_log() {
    let dir = tempfile::tempdir().unwrap();
    toy_pipeline(dir.path());
    let test = read_instances(&dir.path().join("dataset/test.jsonl")).unwrap();

    // YES with the gold sentence for low-risk items, prose for the rest, one failure
    let entries: Vec<LogEntry> = test
        .iter()
        .enumerate()
        .map(|(k, inst)| {
            let content = if inst.label.is_positive() {
                format!("{{\"answer\": \"YES\", \"evidence\": {}}}", json!(inst.answer_text))
            } else {
                "I cannot tell from this text.".to_string()
            };
            let failed = k == 0;
            LogEntry {
                id: inst.id.clone(),
                request: json!({}),
                response: None,
                content: (!failed).then(|| content.clone()),
                verdict: parse_verdict(if failed { "" } else { &content }),
                attempts: 1,
                error: failed.then(|| "HTTP 500".to_string()),
            }
        })
        .collect();
    let log = dir.path().join("recorded.jsonl");
    let header = LogHeader {
        kind: "header".into(),
        url: "http://localhost:0".into(),
        model: "recorded".into(),
        temperature: 0.0,
        shots: 0,
        seed: 13,
        shot_ids: Vec::new(),
        instances: entries.len(),
        config_hash: None,
    };
    write_log(&log, &RunOutput { header, entries }).unwrap();

    let run = dir.path().to_str().unwrap();
    let base = ["--config", "data/toy/robkit.toml", "--run-dir", run];
    let summary = stdout_json(&robkit(&[&base[..], &["llm-eval", "--replay", log.to_str().unwrap()]].concat()));
    assert_eq!(summary["model"], "llm-0shot");
    assert_eq!(summary["failed"], 1);
    assert_eq!(summary["instances"].as_u64().unwrap() as usize, test.len());

    let report = stdout_json(&robkit(&[&base[..], &["report"]].concat()));
    let llm = report["models"].as_array().unwrap().iter().find(|m| m["model"] == "llm-0shot").unwrap();
    let first_positive = test[0].label.is_positive();
    if !first_positive {
        assert_eq!(llm["macro_f1"], 1.0);
    }
    assert!(llm["macro_f1"].as_f64().unwrap() > 0.8);
}
