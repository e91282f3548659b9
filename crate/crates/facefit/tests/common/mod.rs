#![allow(dead_code)]

use std::path::{Path, PathBuf};

/// A configuration small enough for a full CLI pipeline in a few seconds.
pub const SMALL_CONFIG: &str = r#"{
  "model": {"n_vertices": 150},
  "data": {"n_annotated": 48, "n_wild": 64, "n_eval": 24, "resolution": [64, 64]},
  "training": {
    "batch_size": 8,
    "stage1_epochs": 1,
    "stage2_epochs": 2,
    "network": {
      "input_side": 8,
      "channels": 2,
      "regressor_hidden": [24],
      "encoder_hidden": [12],
      "latent": 6,
      "critic_hidden": [24, 16]
    }
  },
  "eval": {"discard_worst": 4, "batch": 16},
  "ablation": {"seeds": [1, 2], "volume_fractions": [0.5, 1.0]}
}"#;

pub fn write_config(dir: &Path) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, SMALL_CONFIG).unwrap();
    p
}

static QUIET: std::sync::Once = std::sync::Once::new();

/// Runs the CLI in-process and returns its exit status.
pub fn facefit(args: &[&str]) -> i32 {
    // the logger is initialized by the first call in the process
    QUIET.call_once(|| std::env::set_var(facefit::cli::LOG_ENV, "warn"));
    let mut argv = vec!["facefit"];
    argv.extend_from_slice(args);
    facefit::cli::main_with(argv)
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// gen-model, gen-data, train (both stages) and eval into `out`.
pub fn pipeline(config: &Path, out: &Path, train_extra: &[&str]) {
    let (c, o) = (s(config), s(out));
    assert_eq!(facefit(&["gen-model", "--config", c, "--out", o]), 0);
    assert_eq!(facefit(&["gen-data", "--config", c, "--out", o]), 0);
    let mut train = vec!["train", "--config", c, "--out", o];
    train.extend_from_slice(train_extra);
    assert_eq!(facefit(&train), 0);
    assert_eq!(facefit(&["eval", "--config", c, "--out", o]), 0);
}

/// Sorted (name, bytes) of every file in `dir`.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}
