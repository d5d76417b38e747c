#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn test_wav() -> PathBuf {
    crate_dir().join("tests/data/speechlike_16k.wav")
}

// ---- JSON schemas ----

const SCHEMAS: [&str; 5] = [
    "common.v1.schema.json",
    "sidecar.v1.schema.json",
    "session-log-entry.v1.schema.json",
    "measurement.v1.schema.json",
    "report.v1.schema.json",
];

fn load_schema(name: &str) -> Value {
    let path = crate_dir().join("schemas").join(name);
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

pub fn validator(name: &str) -> jsonschema::Validator {
    let mut options = jsonschema::options();
    options.with_draft(jsonschema::Draft::Draft202012);
    for other in SCHEMAS {
        let schema = load_schema(other);
        let id = schema["$id"].as_str().unwrap().to_string();
        options.with_resource(id, jsonschema::Resource::from_contents(schema).unwrap());
    }
    options.build(&load_schema(name)).unwrap()
}

pub fn schema_errors(name: &str, instance: &Value) -> Vec<String> {
    validator(name)
        .iter_errors(instance)
        .map(|e| format!("{} at {}", e, e.instance_path))
        .collect()
}

pub fn assert_valid(name: &str, instance: &Value) {
    let errors = schema_errors(name, instance);
    assert!(errors.is_empty(), "{name}: {errors:#?}");
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Validate every JSON artifact in a session directory.
pub fn assert_session_valid(dir: &Path) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name.ends_with(".sg.json") {
            assert_valid("sidecar.v1.schema.json", &read_json(&path));
        } else if name == "result.json" {
            assert_valid("measurement.v1.schema.json", &read_json(&path));
        } else if name == "report.json" {
            assert_valid("report.v1.schema.json", &read_json(&path));
        } else if name == "session.log.jsonl" {
            let text = std::fs::read_to_string(&path).unwrap();
            assert!(text.ends_with('\n'));
            for line in text.lines() {
                assert_valid("session-log-entry.v1.schema.json", &serde_json::from_str(line).unwrap());
            }
        }
    }
}

// ---- command line ----

pub fn safeguard(args: &[&str]) -> Output {
    safeguard_env(args, &[])
}

pub fn safeguard_env(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_safeguard"));
    cmd.args(args).env_remove("SAFEGUARD_OUT_DIR");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("run safeguard binary")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn expect_ok(out: &Output) -> String {
    assert_eq!(
        code(out),
        0,
        "stdout:\n{}\nstderr:\n{}",
        stdout(out),
        String::from_utf8_lossy(&out.stderr)
    );
    stdout(out)
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

// ---- reference oracles, written independently of the library ----

/// Unitary DFT by direct summation.
pub fn naive_dft(x: &[f64]) -> Vec<(f64, f64)> {
    let len = x.len();
    let scale = 1.0 / (len as f64).sqrt();
    (0..len)
        .map(|m| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &v) in x.iter().enumerate() {
                let angle = -2.0 * std::f64::consts::PI * ((m * n) % len) as f64 / len as f64;
                re += v * angle.cos();
                im += v * angle.sin();
            }
            (re * scale, im * scale)
        })
        .collect()
}

pub fn naive_magnitudes(x: &[f64]) -> Vec<f64> {
    naive_dft(x).into_iter().map(|(re, im)| re.hypot(im)).collect()
}

/// `y[n] = sum_k h[k] x[(n - k) mod L]`.
pub fn brute_circular(x: &[f64], h: &[f64]) -> Vec<f64> {
    let len = x.len();
    (0..len)
        .map(|n| {
            h.iter()
                .enumerate()
                .map(|(k, hk)| hk * x[(n + len * h.len() - k) % len])
                .sum()
        })
        .collect()
}

/// Linear convolution truncated to `x.len()` samples.
pub fn brute_linear_truncated(x: &[f64], h: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            (0..=n.min(h.len().saturating_sub(1)))
                .map(|k| h[k] * x[n - k])
                .sum()
        })
        .collect()
}

pub fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn rms_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

pub fn energy(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn random_vec(rng: &mut ChaCha8Rng, len: usize, amplitude: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-amplitude..amplitude)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Multitone with every odd bin empty: exact spectral zeros at odd bins
/// apart from float rounding.
pub fn sparse_signal(len: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let mut x = vec![0.0; len];
    for m in (2..len / 2).step_by(2) {
        let amp = r.random_range(0.2..1.0);
        let phase = r.random_range(0.0..std::f64::consts::TAU);
        for (n, v) in x.iter_mut().enumerate() {
            *v += amp * (std::f64::consts::TAU * (m * n) as f64 / len as f64 + phase).cos();
        }
    }
    let peak = x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    x.iter().map(|v| 0.5 * v / peak).collect()
}
