use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of cost vectors kept for the variance term.
pub const DEFAULT_WINDOW: usize = 10;

/// Sliding window of per-scale cost vectors.
///
/// Vectors recorded before a scale joined the ladder are shorter than later
/// ones; the missing entries count as unobserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostHistory {
    window: usize,
    entries: VecDeque<Vec<f64>>,
}

impl CostHistory {
    pub fn new(window: usize) -> Self {
        Self { window: window.max(1), entries: VecDeque::new() }
    }

    pub fn push(&mut self, costs: Vec<f64>) {
        if self.entries.len() == self.window {
            self.entries.pop_front();
        }
        self.entries.push_back(costs);
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.entries.iter()
    }

    pub fn to_vec(&self) -> Vec<Vec<f64>> {
        self.entries.iter().cloned().collect()
    }
}

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let s: f64 = v.iter().sum();
    (s > 0.0).then(|| v.iter().map(|x| x / s).collect())
}

/// Momentum-based scale-selection distribution.
///
/// `p = normalize(lambda * p1 + (1 - lambda) * p2)` where `p1` normalises the
/// positive part of the latest cost change per scale and `p2` normalises the
/// per-scale standard deviation (population) over the window. Fewer than two
/// vectors, or both terms vanishing, gives the uniform distribution.
pub fn task_selection(history: &[Vec<f64>], lambda: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::TaskSelection(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let last = history.last().ok_or_else(|| Error::TaskSelection("no cost vector observed yet".into()))?;
    let k = last.len();
    if k == 0 {
        return Err(Error::TaskSelection("cost vectors are empty".into()));
    }
    if let Some(bad) = history.iter().find(|c| c.len() > k) {
        return Err(Error::TaskSelection(format!(
            "cost vector of length {} is longer than the latest ({k})",
            bad.len()
        )));
    }
    if last.iter().any(|c| !c.is_finite()) {
        return Err(Error::TaskSelection(format!("non-finite cost in {last:?}")));
    }
    let uniform = vec![1.0 / k as f64; k];
    if history.len() < 2 {
        return Ok(uniform);
    }
    let prev = &history[history.len() - 2];
    let p1: Vec<f64> = (0..k)
        .map(|i| match prev.get(i) {
            Some(&c) if c.is_finite() => (last[i] - c).max(0.0),
            _ => 0.0,
        })
        .collect();
    let p2: Vec<f64> = (0..k)
        .map(|i| {
            let obs: Vec<f64> = history.iter().filter_map(|c| c.get(i).copied()).filter(|c| c.is_finite()).collect();
            let m = obs.iter().sum::<f64>() / obs.len() as f64;
            (obs.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / obs.len() as f64).sqrt()
        })
        .collect();
    let mixed: Vec<f64> = match (normalized(&p1), normalized(&p2)) {
        (None, None) => return Ok(uniform),
        (a, b) => (0..k)
            .map(|i| lambda * a.as_ref().map_or(0.0, |v| v[i]) + (1.0 - lambda) * b.as_ref().map_or(0.0, |v| v[i]))
            .collect(),
    };
    Ok(normalized(&mixed).unwrap_or(uniform))
}
