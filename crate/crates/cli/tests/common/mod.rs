#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const LEVELS: [&str; 4] = ["none", "low", "mid", "high"];

/// Writes a CSV with covariates `x1..xp`, a four-level exposure drawn from an
/// ordered logit with slopes `beta`, and `y = 0.5·level + x1 + noise`.
pub fn write_fixture(dir: &Path, n: usize, beta: &[f64], seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = beta.len();
    let mut csv = String::from("id");
    for j in 0..p {
        write!(csv, ",x{}", j + 1).unwrap();
    }
    csv.push_str(",exposure,y\n");
    for i in 0..n {
        let x: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
        let eta: f64 = beta.iter().zip(&x).map(|(b, v)| b * v).sum();
        let u: f64 = rng.random();
        let level = [-1.0, 0.0, 1.0].iter().position(|&th: &f64| u < 1.0 / (1.0 + (eta - th).exp())).unwrap_or(3);
        let noise: f64 = StandardNormal.sample(&mut rng);
        let y = 0.5 * level as f64 + x[0] + noise;
        write!(csv, "{i}").unwrap();
        for v in &x {
            write!(csv, ",{v}").unwrap();
        }
        writeln!(csv, ",{},{y}", LEVELS[level]).unwrap();
    }
    let path = dir.join("data.csv");
    std::fs::write(&path, csv).unwrap();
    path
}

/// Config for a fixture from [`write_fixture`]; `extra` is appended verbatim.
pub fn write_config(dir: &Path, p: usize, extra: &str) -> PathBuf {
    let mut text = String::from(
        "input = \"data.csv\"\nid = \"id\"\noutcome = \"y\"\nseed = 3\n\n[treatment]\ncolumn = \"exposure\"\nlevels = [\"none\", \"low\", \"mid\", \"high\"]\n",
    );
    for j in 0..p {
        write!(text, "\n[[covariates]]\nname = \"x{}\"\n", j + 1).unwrap();
    }
    text.push('\n');
    text.push_str(extra);
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn ordsub() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ordsub"))
}
