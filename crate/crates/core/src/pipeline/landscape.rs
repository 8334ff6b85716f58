use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, ParamSet};
use crate::cop::EvalSet;
use crate::error::{Error, Result};
use crate::seed;
use crate::solver::{DecodeMode, SolverPolicy};

/// A random parameter-space direction, one block per named parameter.
pub type Direction = Vec<Matrix>;

/// Gaussian direction rescaled so every block has the norm of the matching
/// parameter block.
pub fn filter_normalized_direction(params: &ParamSet, seed: u64) -> Direction {
    let mut rng = seed::rng(seed);
    params
        .params()
        .iter()
        .map(|p| {
            let (r, c) = p.value.shape();
            let raw: Vec<f64> = (0..r * c).map(|_| StandardNormal.sample(&mut rng)).collect();
            let d = Matrix::from_vec(r, c, raw);
            let (dn, pn) = (d.norm(), p.value.norm());
            if dn > 0.0 {
                d.map(|x| x * pn / dn)
            } else {
                d
            }
        })
        .collect()
}

/// `theta + a * d1 + b * d2`, block by block.
pub fn perturb(policy: &SolverPolicy, d1: &Direction, d2: &Direction, a: f64, b: f64) -> SolverPolicy {
    let mut out = policy.clone();
    let names: Vec<String> = out.params.params().iter().map(|p| p.name.clone()).collect();
    for (k, name) in names.iter().enumerate() {
        let m = out.params.get_mut(name).expect("name comes from the set");
        for (i, v) in m.data.iter_mut().enumerate() {
            *v += a * d1[k].data[i] + b * d2[k].data[i];
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapeCell {
    pub i: usize,
    pub j: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Mean greedy gap in percent.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeGrid {
    pub direction_seeds: [u64; 2],
    pub extent: f64,
    pub steps: usize,
    pub cells: Vec<LandscapeCell>,
}

impl LandscapeGrid {
    pub fn center(&self) -> &LandscapeCell {
        let c = self.steps / 2;
        &self.cells[c * self.steps + c]
    }
}

/// Grid coordinate `i` of `steps` over `[-extent, extent]`; the middle index maps to exactly 0.
pub fn grid_coordinate(i: usize, steps: usize, extent: f64) -> f64 {
    let num = 2 * i as i64 - (steps as i64 - 1);
    extent * num as f64 / (steps as f64 - 1.0)
}

/// Mean greedy gap (percent) of `policy` on `set`.
pub fn mean_gap_percent(policy: &SolverPolicy, set: &EvalSet, seed: u64) -> Result<f64> {
    let mut p = policy.clone();
    p.decode_mode = DecodeMode::Greedy;
    Ok(100.0 * set.evaluate(&p, seed)?.mean)
}

/// Evaluates the loss landscape of `policy` on a `steps x steps` grid.
pub fn landscape(policy: &SolverPolicy, set: &EvalSet, steps: usize, extent: f64, seed: u64) -> Result<LandscapeGrid> {
    if steps < 3 || steps.is_multiple_of(2) {
        return Err(Error::Config(vec![format!("landscape steps must be odd and at least 3, got {steps}")]));
    }
    let seeds = [seed::derive2(seed, seed::stream::LANDSCAPE, 0), seed::derive2(seed, seed::stream::LANDSCAPE, 1)];
    let d1 = filter_normalized_direction(&policy.params, seeds[0]);
    let d2 = filter_normalized_direction(&policy.params, seeds[1]);
    let decode_seed = seed::derive(seed, seed::stream::DECODE);
    let mut cells = Vec::with_capacity(steps * steps);
    for i in 0..steps {
        for j in 0..steps {
            let (alpha, beta) = (grid_coordinate(i, steps, extent), grid_coordinate(j, steps, extent));
            let p = perturb(policy, &d1, &d2, alpha, beta);
            let gap = mean_gap_percent(&p, set, decode_seed)?;
            cells.push(LandscapeCell { i, j, alpha, beta, gap });
        }
    }
    Ok(LandscapeGrid { direction_seeds: seeds, extent, steps, cells })
}

pub fn write_landscape_csv(path: &Path, grid: &LandscapeGrid) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(crate::cop::io::csv_err)?;
    for c in &grid.cells {
        w.serialize(c).map_err(crate::cop::io::csv_err)?;
    }
    w.flush()?;
    Ok(())
}
