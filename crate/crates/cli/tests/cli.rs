//! The `flowtx` binary: outputs, determinism and exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const USAGE: i32 = 2;
const DATA: i32 = 3;
const INCOMPATIBLE: i32 = 4;
const NUMERIC: i32 = 5;
const IO: i32 = 6;

fn flowtx(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowtx"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = flowtx(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = flowtx(dir, args);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn fixture(name: &str) -> String {
    format!("{}/../core/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

/// A small separable dataset and an FNN checkpoint trained on it.
fn trained(dir: &Path) {
    ok(dir, &["synth", "--n", "200", "--seed", "3", "--out", "d.csv"]);
    ok(dir, &["train", "--data", "d.csv", "--model", "fnn", "--epochs", "30", "--out-checkpoint", "m.ckpt"]);
}

#[test]
fn synth_writes_header_plus_rows_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--n", "2000", "--seed", "7", "--difficulty", "separable", "--out", "a.csv"]);
    ok(d, &["synth", "--n", "2000", "--seed", "7", "--difficulty", "separable", "--out", "b.csv"]);
    let a = fs::read(d.join("a.csv")).unwrap();
    assert_eq!(a.iter().filter(|&&b| b == b'\n').count(), 2001);
    assert_eq!(a, fs::read(d.join("b.csv")).unwrap());
    let m = json(d.join("a.csv.manifest.json"));
    assert_eq!(m["command"], "synth");
    assert_eq!(m["outputs"][0]["bytes"], a.len() as u64);
}

#[test]
fn synth_validates_record_count() {
    let dir = tempfile::tempdir().unwrap();
    let (c, err) = code(dir.path(), &["synth", "--n", "5", "--out", "x.csv"]);
    assert_eq!(c, USAGE, "{err}");
}

#[test]
fn unwritable_output_is_an_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    let (c, _) = code(dir.path(), &["synth", "--n", "20", "--out", "missing/dir/x.csv"]);
    assert_eq!(c, IO);
}

#[test]
fn train_requires_data() {
    let dir = tempfile::tempdir().unwrap();
    let (c, err) = code(dir.path(), &["train", "--out-checkpoint", "m.ckpt"]);
    assert_eq!(c, USAGE);
    assert!(err.contains("--data"));
}

#[test]
fn fnn_defaults_and_config_layering() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--n", "60", "--seed", "1", "--out", "d.csv"]);
    ok(d, &["train", "--data", "d.csv", "--model", "fnn", "--out-checkpoint", "f.ckpt"]);
    let cfg = &json(d.join("f.ckpt.manifest.json"))["config"];
    assert_eq!((cfg["learning_rate"].as_f64(), cfg["epochs"].as_u64()), (Some(1e-3), Some(100)));
    let log = fs::read_to_string(d.join("f.ckpt.log.csv")).unwrap();
    assert_eq!(log.lines().count(), 101);

    fs::write(d.join("c.json"), r#"{"model": "fnn", "epochs": 4, "batch_size": 8, "seed": 5}"#).unwrap();
    ok(d, &["train", "--data", "d.csv", "--config", "c.json", "--epochs", "2", "--out-checkpoint", "g.ckpt"]);
    let m = json(d.join("g.ckpt.manifest.json"));
    let cfg = &m["config"];
    assert_eq!(cfg["model"], "fnn");
    assert_eq!(cfg["epochs"], 2);
    assert_eq!(cfg["batch_size"], 8);
    assert_eq!(m["seed"], 5);
    assert_eq!(m["inputs"].as_array().unwrap().len(), 2);

    fs::write(d.join("bad.json"), r#"{"epochz": 4}"#).unwrap();
    let (c, _) = code(d, &["train", "--data", "d.csv", "--config", "bad.json", "--out-checkpoint", "h.ckpt"]);
    assert_eq!(c, USAGE);
}

#[test]
fn diverging_training_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--n", "60", "--out", "d.csv"]);
    let (c, err) = code(d, &["train", "--data", "d.csv", "--model", "fnn", "--lr", "1e300", "--out-checkpoint", "m.ckpt"]);
    assert_eq!(c, NUMERIC, "{err}");
    assert!(err.contains("epoch"));
}

#[test]
fn eval_and_predict() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d);

    let table = ok(d, &["eval", "--checkpoint", "m.ckpt", "--data", "d.csv", "--json", "a.json"]);
    assert!(table.starts_with("Model"));
    ok(d, &["eval", "--checkpoint", "m.ckpt", "--data", "d.csv", "--json", "b.json", "--roc", "roc.csv"]);
    assert_eq!(fs::read(d.join("a.json")).unwrap(), fs::read(d.join("b.json")).unwrap());
    assert!(fs::read_to_string(d.join("roc.csv")).unwrap().starts_with("fpr,tpr\n"));

    let r = json(d.join("a.json"));
    let c = &r["confusion"];
    let total: u64 = ["tp", "tn", "fp", "fn"].iter().map(|k| c[k].as_u64().unwrap()).sum();
    assert_eq!(total, 200);

    ok(d, &["eval", "--checkpoint", "m.ckpt", "--data", "d.csv", "--subset", "test", "--json", "t.json"]);
    let c = &json(d.join("t.json"))["confusion"];
    let total: u64 = ["tp", "tn", "fp", "fn"].iter().map(|k| c[k].as_u64().unwrap()).sum();
    assert_eq!(total, 40);

    ok(d, &["predict", "--checkpoint", "m.ckpt", "--data", "d.csv", "--out-scores", "s.csv"]);
    let scores = fs::read_to_string(d.join("s.csv")).unwrap();
    assert_eq!(scores.lines().count(), 201);
    assert!(scores.starts_with("row,score\n0,"));
}

#[test]
fn perfect_model_on_its_training_data_scores_full_marks() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--n", "200", "--seed", "4", "--out", "d.csv"]);
    let cfg = r#"{"model": "fnn", "epochs": 60, "split": [0.999, 0.001]}"#;
    fs::write(d.join("c.json"), cfg).unwrap();
    ok(d, &["train", "--data", "d.csv", "--config", "c.json", "--out-checkpoint", "m.ckpt"]);
    let out = ok(d, &["eval", "--checkpoint", "m.ckpt", "--data", "d.csv", "--subset", "train", "--name", "fnn"]);
    let row: Vec<&str> = out.lines().nth(2).unwrap().split_whitespace().collect();
    assert_eq!(row, ["fnn", "100", "100", "100", "100", "0.0", "100", "100"]);
}

#[test]
fn checkpoint_problems_are_incompatibility_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d);
    let ton = fixture("ton_small.csv");

    let (c, err) = code(d, &["eval", "--checkpoint", "m.ckpt", "--data", &ton]);
    assert_eq!(c, INCOMPATIBLE, "{err}");
    let (c, err) = code(d, &["predict", "--checkpoint", "m.ckpt", "--data", &ton, "--profile", "ton", "--out-scores", "s.csv"]);
    assert_eq!(c, INCOMPATIBLE, "{err}");
    assert!(err.contains("13") && err.contains("11"), "{err}");

    let mut bytes = fs::read(d.join("m.ckpt")).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    fs::write(d.join("bad.ckpt"), bytes).unwrap();
    let (c, err) = code(d, &["eval", "--checkpoint", "bad.ckpt", "--data", "d.csv"]);
    assert_eq!(c, INCOMPATIBLE);
    assert!(err.contains("checksum"), "{err}");
}

#[test]
fn report_compares_score_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("labels.csv"), "label\n1\n1\n0\n0\n").unwrap();
    fs::write(d.join("perfect.csv"), "row,score\n0,0.9\n1,0.8\n2,0.1\n3,0.2\n").unwrap();
    fs::write(d.join("coin.csv"), "score\n0.9\n0.2\n0.8\n0.1\n").unwrap();
    let out = ok(
        d,
        &["report", "--scores", "perfect.csv", "coin.csv", "--labels", "labels.csv", "--names", "ours", "coin", "--json", "r.json"],
    );
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines[0].starts_with("Model"));
    let perfect: Vec<&str> = lines[2].split_whitespace().collect();
    assert_eq!(perfect, ["ours", "100", "100", "100", "100", "0.0", "100", "100"]);
    assert!(lines[3].starts_with("coin"));
    assert_eq!(json(d.join("r.json")).as_array().unwrap().len(), 2);

    fs::write(d.join("empty.csv"), "score\n").unwrap();
    let (c, err) = code(d, &["report", "--scores", "empty.csv", "--labels", "labels.csv"]);
    assert_eq!(c, DATA);
    assert!(err.contains("empty.csv"));

    fs::write(d.join("short.csv"), "score\n0.5\n0.4\n").unwrap();
    let (c, err) = code(d, &["report", "--scores", "short.csv", "--labels", "labels.csv"]);
    assert_eq!(c, DATA);
    assert!(err.contains("short.csv"), "{err}");

    let (c, _) = code(d, &["report", "--scores", "coin.csv", "--labels", "labels.csv", "--names", "a", "b"]);
    assert_eq!(c, USAGE);
}
