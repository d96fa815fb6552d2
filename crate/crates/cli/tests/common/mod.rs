#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aggrex_core::dense::DenseMatrix;
use aggrex_core::io::{read_matrix_csv, read_vector_csv};

pub fn aggrex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aggrex"))
        .args(args)
        .env_remove("AGGREX_THREADS")
        .output()
        .expect("binary runs")
}

pub fn ok(args: &[&str]) -> Output {
    let out = aggrex(args);
    assert!(
        out.status.success(),
        "aggrex {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

pub fn matrix(path: PathBuf) -> DenseMatrix {
    read_matrix_csv(std::fs::read(&path).expect("file exists").as_slice()).expect("valid matrix")
}

pub fn vector(path: PathBuf) -> Vec<f64> {
    read_vector_csv(std::fs::read(&path).expect("file exists").as_slice()).expect("valid vector")
}

pub fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(&path).expect("file exists")).expect("valid json")
}
