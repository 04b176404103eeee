#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

/// Three subjects, four channels, one-second windows; small enough that
/// every command finishes in well under a second.
pub fn tiny_config() -> Value {
    json!({
        "dataset": {"source": "synthetic", "n_subjects": 3, "rec_len": 6400, "channels": 4, "class_amplitude": 0.5, "seed": 11},
        "model": {
            "variant": "eeg", "in_channels": 4, "window": 160, "embed_dim": 16, "stem_channels": 4, "stem_kernel": 5,
            "stages": [{"channels": 8, "kernel": 5, "pool": 4}, {"channels": 8, "kernel": 3, "pool": 4}]
        },
        "windows": {"kind": "tiled", "length": 160, "stride": 160, "label": "task"},
        "augment": [
            {"kind": "temporal_cutout", "window": 40, "probability": 0.5},
            {"kind": "temporal_delay", "max_delay": 20, "probability": 0.5},
            {"kind": "gaussian_noise", "scale": 0.5, "probability": 0.5}
        ],
        "loss": {"queue_capacity": 64},
        "train": {
            "pretrain": {"steps": 10, "batch_size": 8, "lr": 1e-3},
            "probe": {"epochs": 40, "batch_size": 64, "lr": 1e-2},
            "finetune": {"epochs": 20, "batch_size": 32, "lr": 1e-3, "mixup_alpha": null}
        },
        "seed": 5
    })
}

pub fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_vec_pretty(cfg).unwrap()).unwrap();
    p
}

pub fn sassl<I: AsRef<std::ffi::OsStr>>(args: impl IntoIterator<Item = I>) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sassl")).args(args).output().expect("binary runs")
}

/// Runs the binary, requires success and returns its stdout JSON.
pub fn ok<I: AsRef<std::ffi::OsStr>>(args: impl IntoIterator<Item = I>) -> Value {
    let out = sassl(args);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// Runs the binary, requires failure and returns the error object.
pub fn fails<I: AsRef<std::ffi::OsStr>>(args: impl IntoIterator<Item = I>) -> (i32, Value) {
    let out = sassl(args);
    assert!(!out.status.success(), "unexpected success: {}", String::from_utf8_lossy(&out.stdout));
    let doc: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    (out.status.code().unwrap(), doc["error"].clone())
}

pub fn read_json(p: impl AsRef<Path>) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

pub fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}
