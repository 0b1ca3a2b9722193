#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cmdnet_harness::StopRule;

pub fn cmdnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmdnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).expect("temp dir is writable");
    path
}

/// Exactly `instances` instances per grid point and detector.
pub fn fixed(instances: u64) -> StopRule {
    StopRule {
        min_errors: u64::MAX,
        max_instances: instances,
        round_size: 10_000.min(instances),
    }
}

/// `(mean, 1.645·sd/√n)` of the paired differences `a - b`.
pub fn paired_upper(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, 1.645 * (var / n).sqrt())
}
