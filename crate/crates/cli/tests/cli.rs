use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn ddeval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddeval"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = ddeval(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn desk_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a small corpus and fits a bigram model to it.
fn fitted(dir: &TempDir) -> (PathBuf, PathBuf) {
    let corpus = dir.path().join("train.txt");
    let lines = [
        "the cat sat",
        "the dog sat",
        "a cat ran",
        "the cat ran on",
        "a dog sat on the mat",
    ];
    std::fs::write(&corpus, lines.join("\n") + "\n").unwrap();
    let model = dir.path().join("model.json");
    let v = ok_json(&[
        "fit",
        s(&corpus),
        "--order",
        "2",
        "--alpha",
        "0.5",
        "--max-tokens",
        "8",
        "--out",
        s(&model),
    ]);
    assert_eq!(v["command"], "fit");
    assert_eq!(v["sentences"], 5);
    assert_eq!(v["config"]["fit"]["order"], 2);
    (corpus, model)
}

#[test]
fn oracle_on_identical_models_is_zero() {
    let dir = TempDir::new().unwrap();
    let (_, model) = fitted(&dir);
    let v = ok_json(&["oracle", s(&model), s(&model), "--budget", "10000000"]);
    assert_eq!(v["dd"].as_f64(), Some(0.0));
    assert_eq!(v["config"]["oracle"]["budget"], 10_000_000);
}

#[test]
fn sample_is_deterministic_and_respects_the_model() {
    let dir = TempDir::new().unwrap();
    let (_, model) = fitted(&dir);
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    for p in [&a, &b] {
        let v = ok_json(&[
            "sample",
            s(&model),
            "-n",
            "200",
            "--seed",
            "3",
            "--temperature",
            "0.9",
            "--out",
            s(p),
        ]);
        assert_eq!(v["config"]["seed"], 3);
        assert_eq!(v["config"]["temperature"], 0.9);
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), 200);
    let words = ["the", "cat", "sat", "dog", "a", "ran", "on", "mat", "<unk>"];
    assert!(text.split_whitespace().all(|w| words.contains(&w)), "{text}");
}

#[test]
fn train_clf_on_identical_corpora_is_chance_level() {
    let dir = TempDir::new().unwrap();
    let (_, model) = fitted(&dir);
    let corpus = dir.path().join("gen.txt");
    ok_json(&["sample", s(&model), "-n", "6000", "--seed", "1", "--out", s(&corpus)]);
    let ckpt = dir.path().join("clf.bin");
    let v = ok_json(&[
        "train-clf",
        s(&corpus),
        s(&corpus),
        "--config",
        s(&desk_config()),
        "--max-epochs",
        "10",
        "--max-len",
        "12",
        "--checkpoint",
        s(&ckpt),
        "--seed",
        "2",
    ]);
    let dd = v["report"]["dd"].as_f64().unwrap();
    assert!(dd < 0.06, "dd {dd}");
    assert_eq!(v["config"]["classifier"]["max_epochs"], 10);
    assert_eq!(v["config"]["seed"], 2);
    assert!(std::fs::metadata(&ckpt).unwrap().len() > 0);
}

#[test]
fn eval_scores_the_selected_metrics_reproducibly() {
    let dir = TempDir::new().unwrap();
    let (corpus, model) = fitted(&dir);
    let generated = dir.path().join("gen.txt");
    ok_json(&["sample", s(&model), "-n", "300", "--out", s(&generated)]);
    let args = [
        "eval",
        s(&corpus),
        s(&generated),
        "--metrics",
        "bleu,selfbleu,lm,rlm,fed",
        "--seed",
        "4",
    ];
    let out1 = ddeval(&args);
    let out2 = ddeval(&args);
    assert!(out1.status.success(), "{}", String::from_utf8_lossy(&out1.stderr));
    assert_eq!(out1.stdout, out2.stdout);
    let v: Value = serde_json::from_slice(&out1.stdout).unwrap();
    let names: Vec<&str> = v["metrics"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["bleu", "selfbleu", "lm", "rlm", "fed"]);
    assert!(v["classifier"].is_null());
    assert_eq!(v["config"]["seed"], 4);
    let bleu = v["metrics"][0]["value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&bleu));
}

#[test]
fn rank_on_the_shipped_config_ranks_perfectly_with_dd() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("report.json");
    let csv = dir.path().join("cells.csv");
    let out = ddeval(&[
        "rank",
        "--config",
        s(&desk_config()),
        "--out",
        s(&report),
        "--csv",
        s(&csv),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["format"], "ddeval-report");
    assert_eq!(v["config_echo"]["name"], "desk");
    assert_eq!(v["partial"], false);
    for group in ["interp", "volume"] {
        let entry = v["tau_table"]
            .as_array()
            .unwrap()
            .iter()
            .find(|e| e["group"] == group && e["metric"] == "dd")
            .unwrap();
        assert_eq!(entry["tau"].as_f64(), Some(1.0), "{group}");
    }
    let csv = std::fs::read_to_string(&csv).unwrap();
    assert!(csv.starts_with("family,generator,temperature,metric,value\n"));
    // 10 cells, oracle plus six metrics each
    assert_eq!(csv.lines().count(), 1 + 10 * 7);
}

#[test]
fn sweep_writes_one_row_per_temperature_and_metric() {
    let out = ddeval(&[
        "sweep",
        "--config",
        s(&desk_config()),
        "--family",
        "interp",
        "--generator",
        "1",
        "--temperatures",
        "0.8,1.0,1.2",
        "--metrics",
        "selfbleu,lm",
        "--real-samples",
        "2000",
        "--generated-samples",
        "2000",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 6);
    assert_eq!(v["table"]["generator"], "interp/lambda=0.15");
    assert_eq!(v["config"]["samples"]["real"], 2000);
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let code = |args: &[&str]| ddeval(args).status.code();
    // usage
    assert_eq!(code(&["frobnicate"]), Some(1));
    assert_eq!(code(&["rank"]), Some(1));
    assert_eq!(code(&["eval", "a", "b", "--metrics", "perplexity"]), Some(1));
    assert_eq!(code(&["--help"]), Some(0));
    // data
    assert_eq!(code(&["oracle", "/nonexistent/a.json", "/nonexistent/b.json"]), Some(2));
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"format\": \"something-else\"}").unwrap();
    assert_eq!(code(&["oracle", s(&bad), s(&bad)]), Some(2));
    // numeric: a learning rate this large makes the parameters non-finite
    let (_, model) = fitted(&dir);
    let corpus = dir.path().join("gen.txt");
    ok_json(&["sample", s(&model), "-n", "400", "--out", s(&corpus)]);
    let train = |lr: &str| {
        code(&[
            "train-clf",
            s(&corpus),
            s(&corpus),
            "--learning-rate",
            lr,
            "--max-epochs",
            "3",
        ])
    };
    assert_eq!(train("1e-3"), Some(0));
    assert_eq!(train("1e300"), Some(3));
}
