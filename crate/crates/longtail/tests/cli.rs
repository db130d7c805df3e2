//! The command-line contract: exit codes, config overlay, run directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn longtail(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_longtail")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = longtail(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(args: &[&str]) -> i32 {
    longtail(args).status.code().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    /// A small generated corpus, preprocessed.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let f = Self { _dir: dir, root };
        ok(&["gen-corpus", "--out", &f.p("corpus.tsv"), "--classes", "5", "--head", "120", "--zipf", "1.0", "--seed", "2"]);
        ok(&["preprocess", "--corpus", &f.p("corpus.tsv"), "--out", &f.p("data"), "--min-count", "1", "--max-len", "16", "--embed-dim", "8"]);
        f
    }

    fn p(&self, rel: &str) -> String {
        self.root.join(rel).display().to_string()
    }

    fn train(&self, run: &str, extra: &[&str]) -> Output {
        let (data, run) = (self.p("data"), self.p(run));
        let mut args = vec!["train", "--data", &data, "--run", &run, "--epochs", "2", "--filters", "4", "--feature-dim", "8", "--lr", "1e-3"];
        args.extend(extra);
        longtail(&args)
    }
}

fn lines(path: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn json(path: &str) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&["train", "--no-such-flag"]), 2);
    assert_eq!(code(&["nonsense"]), 2);
    assert_eq!(code(&["gen-corpus"]), 2);
    assert_eq!(code(&["gen-corpus", "--out", "/dev/null", "--zipf", "0"]), 2);
    assert_eq!(code(&["train", "--sampler", "xyz"]), 2);
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn data_errors_exit_3_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tsv");
    fs::write(&bad, "A\tone\nB two\n").unwrap();
    let out = longtail(&["preprocess", "--corpus", bad.to_str().unwrap(), "--out", dir.path().join("d").to_str().unwrap(), "--min-count", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let missing = dir.path().join("missing");
    assert_eq!(code(&["train", "--data", missing.to_str().unwrap(), "--run", dir.path().join("r").to_str().unwrap()]), 3);
    assert_eq!(code(&["stage2", "crt", "--run", dir.path().join("r").to_str().unwrap()]), 3);
}

#[test]
fn numeric_failure_exits_4() {
    let f = Fixture::new();
    let (data, run) = (f.p("data"), f.p("runs/nan"));
    let out = longtail(&["train", "--data", &data, "--run", &run, "--epochs", "1", "--filters", "4", "--feature-dim", "8", "--lr", "1e250"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epoch 0"));
}

#[test]
fn min_count_drops_and_logs_rare_classes() {
    let f = Fixture::new();
    let out = ok(&["preprocess", "--corpus", &f.p("corpus.tsv"), "--out", &f.p("data50"), "--min-count", "50"]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    // Counts are [120, 60, 40, 30, 24].
    assert!(stderr.contains("dropped class"), "{stderr}");
    let meta = json(&f.p("data50/preprocess.json"));
    assert_eq!(meta["labels"].as_array().unwrap().len(), 2);
    assert_eq!(meta["dropped"].as_array().unwrap().len(), 3);
    assert_eq!(meta["dropped"][0]["count"], 40);
    // The default threshold of 1000 leaves fewer than two classes.
    assert_eq!(code(&["preprocess", "--corpus", &f.p("corpus.tsv"), "--out", &f.p("data1000")]), 3);
}

#[test]
fn run_directory_and_log() {
    let f = Fixture::new();
    assert!(f.train("runs/a", &["--sampler", "srs"]).status.success());
    for name in ["stage1.ckpt", "log.jsonl", "config.json"] {
        assert!(f.root.join("runs/a").join(name).exists(), "{name}");
    }
    let log = f.root.join("runs/a/log.jsonl");
    assert_eq!(lines(&log).len(), 2);
    ok(&["stage2", "crt", "--run", &f.p("runs/a"), "--stage2-epochs", "3"]);
    assert!(f.root.join("runs/a/stage2.ckpt").exists());
    let stages: Vec<String> = lines(&log).iter().map(|v| v["stage"].as_str().unwrap().to_string()).collect();
    assert_eq!(stages, ["stage1", "stage1", "crt", "crt", "crt"]);

    ok(&["stage2", "ncm", "--run", &f.p("runs/a"), "--mean-mode", "running"]);
    assert!(!f.root.join("runs/a/stage2.ckpt").exists());
    assert!(f.root.join("runs/a/ncm_stats.bin").exists());
    assert_eq!(lines(&log).len(), 2);
    let cfg = json(&f.p("runs/a/config.json"));
    assert_eq!(cfg["train"]["sampler"], "srs");
    assert_eq!(cfg["stage2"]["method"], "ncm");
    assert_eq!(cfg["stage2"]["mean-mode"], "running");

    let out = ok(&["eval", "--run", &f.p("runs/a")]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("stage2 ncm-euclidean: overall"));
    let report = json(&f.p("runs/a/eval_stage2.json"));
    assert_eq!(report["labels"].as_array().unwrap().len(), 5);
    let confusion: u64 = report["confusion"].as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap()).map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(confusion, report["n_eval"].as_u64().unwrap());
    ok(&["eval", "--run", &f.p("runs/a"), "--stage", "stage1"]);
    assert_eq!(json(&f.p("runs/a/eval_stage1.json"))["classifier"], "baseline");
}

#[test]
fn explicit_bucket_labels() {
    let f = Fixture::new();
    assert!(f.train("runs/b", &[]).status.success());
    let labels: Vec<String> = json(&f.p("data/preprocess.json"))["labels"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let spec = format!("much={};medium={},{};less={},{}", labels[0], labels[1], labels[2], labels[3], labels[4]);
    ok(&["eval", "--run", &f.p("runs/b"), "--bucket-labels", &spec]);
    let report = json(&f.p("runs/b/eval_stage1.json"));
    assert_eq!(report["buckets"][0], "much");
    assert_eq!(report["buckets"][4], "less");
    // The much bucket is the single class's accuracy.
    assert_eq!(report["much"], report["per_class"][0]);
    let incomplete = format!("much={}", labels[0]);
    assert_eq!(code(&["eval", "--run", &f.p("runs/b"), "--bucket-labels", &incomplete]), 2);
    assert_eq!(code(&["eval", "--run", &f.p("runs/b"), "--bucket-labels", "huge=X"]), 2);
}

#[test]
fn config_file_overlay_and_replay() {
    let f = Fixture::new();
    let cfg = f.root.join("cfg.json");
    fs::write(&cfg, r#"{"sampler": "cbs", "epochs": 3, "seed": 9, "filters": 4, "feature-dim": 8, "lr": 0.001}"#).unwrap();
    let (data, run_a) = (f.p("data"), f.p("runs/a"));
    // Flags win over the file.
    ok(&["train", "--config", cfg.to_str().unwrap(), "--data", &data, "--run", &run_a, "--sampler", "pbs"]);
    let recorded = json(&f.p("runs/a/config.json"));
    assert_eq!(recorded["train"]["sampler"], "pbs");
    assert_eq!(recorded["train"]["epochs"], 3);
    assert_eq!(recorded["train"]["seed"], 9);

    // A run's config.json replays the run bit for bit.
    let run_b = f.p("runs/b");
    ok(&["train", "--config", &f.p("runs/a/config.json"), "--data", &data, "--run", &run_b]);
    assert_eq!(fs::read(f.root.join("runs/a/stage1.ckpt")).unwrap(), fs::read(f.root.join("runs/b/stage1.ckpt")).unwrap());

    fs::write(&cfg, r#"{"sampler": "cbs", "epochz": 3}"#).unwrap();
    assert_eq!(code(&["train", "--config", cfg.to_str().unwrap(), "--data", &data, "--run", &run_a]), 2);
}

#[test]
fn checkpoint_must_match_its_data() {
    let f = Fixture::new();
    assert!(f.train("runs/a", &[]).status.success());
    ok(&["preprocess", "--corpus", &f.p("corpus.tsv"), "--out", &f.p("other"), "--min-count", "1", "--max-len", "16", "--embed-dim", "8", "--min-freq", "3"]);
    let out = longtail(&["eval", "--run", &f.p("runs/a"), "--data", &f.p("other")]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash mismatch"));
}

#[test]
fn frozen_embedding_is_recorded_in_the_checkpoint() {
    let f = Fixture::new();
    assert!(f.train("runs/frozen", &["--freeze-embedding"]).status.success());
    let bytes = fs::read(f.root.join("runs/frozen/stage1.ckpt")).unwrap();
    let ckpt = longtail_core::model::Checkpoint::from_bytes(&bytes).unwrap();
    assert!(!ckpt.model.extractor.embedding.trainable);
    let data = longtail::data::PreparedData::load(&f.root.join("data")).unwrap();
    assert_eq!(ckpt.model.extractor.embedding.matrix, data.embedding.matrix);
}
