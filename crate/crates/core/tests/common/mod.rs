//! Test support shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use serde_json::Value;

pub mod masks;

/// SplitMix64, mirrored by `tools/oracles.py`.
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * 2f64.powi(-53)
    }

    /// Irwin-Hall(12) - 6.
    pub fn normal(&mut self) -> f64 {
        let mut s = 0.0;
        for _ in 0..12 {
            s += self.uniform();
        }
        s - 6.0
    }

    pub fn exponential(&mut self) -> f64 {
        -(1.0 - self.uniform()).ln()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.uniform() * n as f64) as usize
    }
}

pub fn sigmoid(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

pub fn oracles() -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/oracles.json");
    serde_json::from_str(&std::fs::read_to_string(path).expect("oracle fixture")).expect("valid json")
}

pub fn floats(v: &Value) -> Vec<f64> {
    v.as_array().expect("array").iter().map(|x| x.as_f64().expect("number")).collect()
}

pub const SCALES: [f64; 6] = [1.0, 10.0, 0.1, 100.0, 0.5, 3.0];

/// Row-major covariates and outcomes of the k-th logistic oracle dataset.
pub fn logistic_dataset(k: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = SplitMix64::new(1000 + k);
    let p = 1 + (k as usize) % 6;
    let x: Vec<Vec<f64>> =
        (0..200).map(|_| (0..p).map(|j| (rng.normal() + 0.3 * j as f64) * SCALES[j]).collect()).collect();
    let beta: Vec<f64> = (0..p).map(|j| (rng.uniform() * 2.0 - 1.0) / SCALES[j]).collect();
    let b0 = rng.uniform() - 0.5;
    let y = x
        .iter()
        .map(|row| {
            let mut eta = b0;
            for j in 0..p {
                eta += row[j] * beta[j];
            }
            rng.uniform() < sigmoid(eta)
        })
        .collect();
    (x, y)
}

pub fn shapiro_sample(s: u64) -> Vec<f64> {
    let mut rng = SplitMix64::new(5000 + s);
    let n = [10, 50, 500][(s % 3) as usize];
    (0..n)
        .map(|_| match (s / 3) % 3 {
            0 => rng.normal(),
            1 => rng.uniform(),
            _ => rng.exponential(),
        })
        .collect()
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol, "{what}: {a} vs {b} (tol {tol})");
}
