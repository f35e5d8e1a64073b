use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn imgbpe(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imgbpe")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = imgbpe(args, cwd);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn entropy_reports_oracle_values() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&ok(&["entropy", "--p", "0.9", "--q", "0.9", "--dict-size", "256"], dir.path()));
    assert!((v["h_pi"].as_f64().unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    assert!((v["h_inf"].as_f64().unwrap() - 0.325_082_973_391_448_2).abs() < 1e-12);
    assert!((v["prop2_bound"].as_f64().unwrap() - 0.5600).abs() < 0.001);
    assert_eq!(v["provenance"]["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["provenance"]["options"]["command"]["entropy"]["dict_size"], 256);

    let bits = json(&ok(&["entropy", "--bits", "--p", "0.5", "--q", "0.5"], dir.path()));
    assert_eq!(bits["units"], "bits");
    assert!((bits["h_pi"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn train_with_zero_merges_gives_empty_vocab() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen-markov", "--m", "6", "--count", "3", "--out", "corpus"], dir.path());
    ok(&["train", "--corpus", "corpus", "--merges", "0", "--out", "v.json"], dir.path());
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("v.json")).unwrap()).unwrap();
    assert_eq!(v["merges"], serde_json::json!([]));
    assert_eq!(v["base_vocab_size"], 2);
    assert_eq!(v["provenance"]["command"], "train");
}

#[test]
fn encode_decode_round_trip_with_layout() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen-scenario", "--m", "8", "--count", "4", "--seed", "2", "--out", "corpus"], d);
    ok(&["train", "--corpus", "corpus", "--merges", "5", "--out", "v.json"], d);
    ok(&["encode", "--vocab", "v.json", "--layout", "corpus", "--out", "enc.jsonl"], d);
    ok(&["decode", "--vocab", "v.json", "--layout", "enc.jsonl", "--out", "back"], d);
    for i in 0..4 {
        let name = format!("grid_{i:05}.grid");
        assert_eq!(fs::read(d.join("corpus").join(&name)).unwrap(), fs::read(d.join("back").join(&name)).unwrap());
    }
    // Agnostic codes cannot be decoded from IDs alone.
    ok(&["encode", "--vocab", "v.json", "corpus", "--out", "plain.jsonl"], d);
    let out = imgbpe(&["decode", "--vocab", "v.json", "plain.jsonl", "--out", "x"], d);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oriented_binary_round_trip_without_layout() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen-markov", "--m", "8", "--count", "3", "--format", "binary", "--out", "corpus"], d);
    ok(&["train", "--corpus", "corpus", "--merges", "6", "--orientation", "oriented", "--out", "v.json"], d);
    ok(&["encode", "--vocab", "v.json", "corpus", "--out", "enc.jsonl"], d);
    ok(&["decode", "--vocab", "v.json", "enc.jsonl", "--format", "binary", "--out", "back"], d);
    let name = "grid_00002.igrd";
    assert_eq!(fs::read(d.join("corpus").join(name)).unwrap(), fs::read(d.join("back").join(name)).unwrap());
}

#[test]
fn identical_invocations_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = ["eval-gap", "--m", "8", "--train-grids", "4", "--eval-grids", "4", "--merges", "6", "--seed", "9"];
    let a = ok(&args, d).stdout;
    let b = ok(&args, d).stdout;
    assert_eq!(a, b);
    let v: Value = serde_json::from_slice(&a).unwrap();
    assert!(v["flattened_unigram"]["total"].as_f64().unwrap().is_finite());
    assert_eq!(v["config"]["seed"], 9);
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), "seed = 4\n[entropy]\np = 0.8\nq = 0.8\ndict_size = 4096\n").unwrap();
    let v = json(&ok(&["--config", "run.toml", "entropy", "--q", "0.7"], d));
    let opts = &v["provenance"]["options"];
    assert_eq!(opts["seed"], 4);
    assert_eq!(opts["command"]["entropy"]["kernel"]["p"], 0.8);
    assert_eq!(opts["command"]["entropy"]["kernel"]["q"], 0.7);
    assert_eq!(v["dictionary_size_d"], 4096);

    fs::write(d.join("run.json"), r#"{"entropy": {"dict_size": 1024}}"#).unwrap();
    let v = json(&ok(&["entropy", "--config", "run.json"], d));
    assert_eq!(v["dictionary_size_d"], 1024);
}

#[test]
fn stats_and_vocab_map() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen-markov", "--m", "6", "--count", "3", "--out", "corpus"], d);
    ok(&["train", "--corpus", "corpus", "--merges", "3", "--out", "v.json"], d);
    let s = json(&ok(&["stats", "--corpus", "corpus", "--vocab", "v.json", "--top", "2"], d));
    assert_eq!(s["grids"], 3);
    assert_eq!(s["cells"], 108);
    assert_eq!(s["usage"].as_array().unwrap().len(), 2);

    let m = json(&ok(&["vocab-map", "--text-vocab-size", "100", "--vocab", "v.json"], d));
    assert_eq!(m["map"]["special_tokens"]["image_start"], 105);
    assert_eq!(m["total_size"], 107);
    let m = json(&ok(&["vocab-map", "--text-vocab-size", "10", "--base", "4", "--merged", "2"], d));
    assert_eq!(m["ranges"]["merged_image"], serde_json::json!([14, 16]));
}

#[test]
fn export_probe_writes_manifest_and_splits() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["export-probe", "--m", "8", "--merges", "4", "--vocab-grids", "10", "--splits", "train=5,eval=3", "--out", "probe"], d);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(d.join("probe/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["splits"][1]["name"], "eval");
    assert_eq!(manifest["splits"][0]["raw"]["sequences"], 5);
    assert_eq!(manifest["splits"][0]["tokenized"]["sequences"], 5 * 16);
    assert_eq!(manifest["provenance"]["command"], "export-probe");
    let raw = fs::read_to_string(d.join("probe/eval.raw.jsonl")).unwrap();
    assert_eq!(raw.lines().count(), 3);
    for line in raw.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["tokens"].as_array().unwrap().len(), 64);
    }
    assert!(d.join("probe/vocab.json").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(imgbpe(&["frobnicate"], d).status.code(), Some(1));
    assert_eq!(imgbpe(&["entropy", "--nope"], d).status.code(), Some(1));
    assert_eq!(imgbpe(&["train", "--corpus", "missing", "--merges", "1"], d).status.code(), Some(2));
    assert_eq!(imgbpe(&["entropy", "--p", "1.5"], d).status.code(), Some(2));
    assert_eq!(imgbpe(&["--help"], d).status.code(), Some(0));
    fs::create_dir(d.join("bad")).unwrap();
    fs::write(d.join("bad/x.grid"), "2 2\n0 1\n1\n").unwrap();
    assert_eq!(imgbpe(&["train", "--corpus", "bad", "--merges", "1"], d).status.code(), Some(2));
}
