//! Drives the `aud` binary through a synthetic corpus.

use std::path::Path;
use std::process::{Command, Output};

fn aud(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aud")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = aud(args, cwd);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn report(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synthetic_corpus_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth-corpus", "--out", "corpus", "--triplets", "60"], d);
    for f in ["manifest.csv", "reference.jsonl", "triplets.jsonl", "utt000.wav"] {
        assert!(d.join("corpus").join(f).exists(), "{f}");
    }
    ok(&["run", "--manifest", "corpus/manifest.csv", "--preset", "synthetic", "--out", "out"], d);
    for f in ["stage1/clustering.json", "stage1/clustering.dot", "system1/inventory.json", "system2/exemplars.json"] {
        assert!(d.join("out").join(f).exists(), "{f}");
    }
    let meta = report(&d.join("out/system2/metadata.json"));
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
    assert!(!meta["ll_trajectory"].as_array().unwrap().is_empty());

    let stdout = ok(
        &[
            "encode", "--inventory", "out/system2/inventory.json", "--manifest", "corpus/manifest.csv", "--preset",
            "synthetic", "--out", "test.jsonl",
        ],
        d,
    );
    let summary: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(summary["utterances"], 2);

    ok(&["resynth", "--exemplars", "out/system2/exemplars.json", "--transcriptions", "test.jsonl", "--out", "r.wav"], d);
    assert!(aud_core::read_wav(d.join("r.wav")).unwrap().duration() > 0.5);

    ok(
        &[
            "eval", "--transcriptions", "out/system1/transcriptions.jsonl", "--reference", "corpus/reference.jsonl",
            "--triplets", "corpus/triplets.jsonl", "--abx-distance", "labels", "--out", "rep",
        ],
        d,
    );
    let r = report(&d.join("rep/report.json"));
    assert!(r["purity"].as_f64().unwrap() > 0.9, "{r}");
    assert!(r["abx_error"].as_f64().unwrap() < 0.1, "{r}");
    let csv = std::fs::read_to_string(d.join("rep/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn staged_commands_match_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth-corpus", "--out", "corpus", "--utterances", "8", "--triplets", "0"], d);
    let m = "corpus/manifest.csv";
    ok(&["run", "--manifest", m, "--preset", "synthetic", "--out", "out"], d);
    ok(&["discover", "--manifest", m, "--preset", "synthetic", "--out", "s1"], d);
    let read = |p: &str| std::fs::read_to_string(d.join(p)).unwrap();
    assert_eq!(read("s1/inventory.json"), read("out/stage1/inventory.json"));
    ok(&["train-stage2", "--manifest", m, "--inventory", "s1/inventory.json", "--preset", "synthetic", "--out", "sys1"], d);
    assert_eq!(read("sys1/inventory.json"), read("out/system1/inventory.json"));
    ok(
        &[
            "merge", "--manifest", m, "--inventory", "sys1/inventory.json", "--clustering", "s1/clustering.json",
            "--preset", "synthetic", "--out", "sys2",
        ],
        d,
    );
    assert_eq!(read("sys2/inventory.json"), read("out/system2/inventory.json"));
    assert_eq!(read("sys2/transcriptions.jsonl"), read("out/system2/transcriptions.jsonl"));
}

#[test]
fn errors_carry_a_category_and_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = aud(&["resynth", "--exemplars", "missing.json", "--transcriptions", "t.jsonl", "--out", "x.wav"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[Io]:"));

    std::fs::write(d.join("bad.toml"), "knn_k = 0\n").unwrap();
    std::fs::write(d.join("manifest.csv"), "utterance_id,path,split\n").unwrap();
    let out = aud(&["discover", "--manifest", "manifest.csv", "--config", "bad.toml", "--out", "o"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[InvalidConfig]:"), "{}", String::from_utf8_lossy(&out.stderr));

    let out = aud(&["discover", "--manifest", "manifest.csv", "--out", "o"], d);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[EmptyCorpus]:"), "{}", String::from_utf8_lossy(&out.stderr));
}
