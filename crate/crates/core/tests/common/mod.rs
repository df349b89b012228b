//! Helpers shared by the binary-level test targets.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// A configuration small enough to run every subcommand in seconds.
pub const SMALL_CONFIG: &str = r#"
seed = 7

[synth]
labeled_count = 200
unlabeled_count = 400
prior_decay = 0.8

[synth.video]
num_videos = 4
frames_per_video = 100
mean_segment_len = 30.0

[spatial]
total_steps = 30
checkpoint_every = 10

[temporal_train]
epochs = 2

[eval]
test_videos = 1
heldout_count = 100
ablation_seeds = 2
enlarge_factor = 2
"#;

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p
}

/// Runs the binary with `--config cfg --out out` followed by `args`.
pub fn fer(cfg: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fer-ssl"))
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn ok(cfg: &Path, out: &Path, args: &[&str]) -> String {
    let o = fer(cfg, out, args);
    assert!(o.status.success(), "{:?} failed: {}", args, String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

/// The full pipeline from data generation to smoothed evaluation.
pub const PIPELINE: &[&[&str]] = &[
    &["gen-data"],
    &["train-spatial"],
    &["train-temporal"],
    &["predict"],
    &["predict", "--model", "spatial"],
    &["evaluate"],
    &["evaluate", "--smooth"],
];

pub fn run_pipeline(cfg: &Path, out: &Path) {
    for args in PIPELINE {
        ok(cfg, out, args);
    }
}

/// Every file under `root`, relative path to contents, in sorted order.
pub fn snapshot(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, acc: &mut Vec<(PathBuf, Vec<u8>)>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, acc);
            } else {
                acc.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    let mut acc = Vec::new();
    walk(root, root, &mut acc);
    acc.sort();
    acc
}

pub const HAND_GOLD: &str = "video_id,frame_idx,y\nv,0,0\nv,1,0\nv,2,1\nv,3,1\n";
pub const HAND_PRED: &str = "video_id,frame_idx,pred\nv,0,0\nv,1,1\nv,2,1\nv,3,1\n";

pub fn metrics_f1(path: &Path) -> f64 {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v["macro_f1"].as_f64().unwrap()
}
