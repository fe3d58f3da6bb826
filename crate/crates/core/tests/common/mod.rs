#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const HEADER_NAMES: [&str; 5] = ["instr", "class", "nb.repeat", "attendance", "difficulty"];

pub fn header() -> String {
    let mut names: Vec<String> = HEADER_NAMES.iter().map(|s| s.to_string()).collect();
    names.extend((1..=28).map(|q| format!("Q{q}")));
    names.join(",")
}

/// Evaluation-shaped CSV with the same columns and ranges as the real
/// file. A latent satisfaction level drives the question answers, and
/// low attendance raises the chance of a repeat.
pub fn synthetic_csv(rows: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = header();
    out.push('\n');
    for _ in 0..rows {
        let instr = rng.random_range(1..=3);
        let class = rng.random_range(1..=13);
        let attendance = rng.random_range(0..=4);
        let difficulty = rng.random_range(1..=5);
        let mood: i64 = rng.random_range(1..=5);
        let repeat_rate = if attendance == 0 { 0.6 } else { 0.1 } + if class == 5 { -0.08 } else { 0.0 };
        let repeat = if rng.random_bool(repeat_rate) {
            rng.random_range(2..=3)
        } else {
            1
        };
        let mut cells = vec![instr, class, repeat, attendance, difficulty];
        for _ in 0..28 {
            let jitter: i64 = rng.random_range(-1..=1);
            cells.push((mood + jitter).clamp(1, 5));
        }
        let line: Vec<String> = cells.iter().map(|c| c.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_synthetic(dir: &Path, rows: usize, seed: u64) -> PathBuf {
    let path = dir.join("synthetic.csv");
    std::fs::write(&path, synthetic_csv(rows, seed)).expect("write synthetic csv");
    path
}

/// Runs the CLI in-process and returns (status, stdout, stderr).
pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    let mut argv = vec!["evalmine"];
    argv.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = evalmine::cli::run_with(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).expect("utf8 stdout"),
        String::from_utf8(err).expect("utf8 stderr"),
    )
}
