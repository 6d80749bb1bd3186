//! Helpers shared by the command-line tests.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Small pipeline: 16³ geologies, 10 Hz records over [1, 4.2] s.
pub const SMALL_CONFIG: &str = "\
[geology]
grid = [16, 16, 16]

[simulation]
record_rate_hz = 10.0
record_window_s = [1.0, 4.2]
";

pub fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uno3d")).args(args).output().expect("binary runs")
}

/// Runs and panics with stderr on a non-zero exit.
pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "uno3d {} failed ({:?}):\n{}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file below `dir`, relative path and contents, sorted.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Geologies plus simulations with the small configuration.
pub fn small_dataset(dir: &Path, count: usize, seed: u64, workers: usize) -> (PathBuf, PathBuf) {
    let cfg = write_config(dir, "small.toml", SMALL_CONFIG);
    let geo = dir.join("geology");
    let sim = dir.join("sim");
    let (count, seed, workers) = (count.to_string(), seed.to_string(), workers.to_string());
    run_ok(&["gen-geology", "--config", s(&cfg), "--seed", &seed, "--count", &count, "--out", s(&geo)]);
    run_ok(&["simulate", "--config", s(&cfg), "--workers", &workers, "--geology", s(&geo), "--out", s(&sim)]);
    (geo, sim)
}
