#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Small smooth-drift experiment that runs every stage in a few seconds.
pub const SMALL: &str = r#"
name = "small"
seed = 5

[noise]
alpha = 1.5

[indices]
beta = -0.1

[drift]
kind = "smooth"
horizon = 0.5
amplitude = 1.0
frequency = 1.0

[density]
times = [0.1, 1.0]
radius = 20.0
points = 101

[besov]
pairs = 4
levels = [1, 2, 3, 4]

[simulation]
paths = 20000
steps = 32
dump = true

[solver.grid]
points = 4096
steps = 60
grading = 6
outputs = 4

[verify]
levels = [2, 4, 6]
lemma_draws = 4
"#;

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

/// Runs the binary with `args`, writing artifacts under `out`.
pub fn run(command: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stablelab"))
        .arg(command)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

pub fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

/// Sorted `(name, bytes)` of every file in `dir`.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}
