#![allow(dead_code)]

use std::path::PathBuf;

use asp_core::cop::Instance;
use asp_core::curriculum::RunRecord;
use asp_core::pipeline::RunConfig;
use itertools::Itertools;

/// Shortest closed tour by enumerating every permutation that starts at city 0.
pub fn brute_force_length(inst: &Instance) -> f64 {
    let n = inst.n();
    if n < 2 {
        return 0.0;
    }
    (1..n)
        .permutations(n - 1)
        .map(|rest| {
            let mut len = inst.dist(0, rest[0]) + inst.dist(rest[n - 2], 0);
            for w in rest.windows(2) {
                len += inst.dist(w[0], w[1]);
            }
            len
        })
        .fold(f64::INFINITY, f64::min)
}

/// Central-difference derivative of `f` along every coordinate of `x`.
pub fn central_differences(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest per-coordinate relative error, with `floor` guarding near-zero entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn workspace_file(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn desk_config() -> RunConfig {
    RunConfig::load(&workspace_file("configs/desk.json")).expect("desk config")
}

pub fn smoke_config() -> RunConfig {
    RunConfig::load(&workspace_file("configs/smoke.json")).expect("smoke config")
}

/// Run-log records with the wallclock field dropped.
pub fn strip_wallclock(log: &[RunRecord]) -> Vec<serde_json::Value> {
    log.iter()
        .map(|r| {
            let mut v = serde_json::to_value(r).unwrap();
            v.as_object_mut().unwrap().remove("wallclock");
            v
        })
        .collect()
}

/// Same as [`strip_wallclock`] for a JSONL log on disk.
pub fn strip_wallclock_text(text: &str) -> Vec<serde_json::Value> {
    text.lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("wallclock");
            v
        })
        .collect()
}
