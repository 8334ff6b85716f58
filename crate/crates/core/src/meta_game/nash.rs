use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Equilibrium of the zero-sum game where the row player (solvers) minimises
/// the entries of `G` and the column player (distributions) maximises them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashSolution {
    pub sigma_ss: Vec<f64>,
    pub sigma_dg: Vec<f64>,
    /// `sigma_ss^T G sigma_dg`.
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MetaSolver {
    #[default]
    Lp,
    FictitiousPlay { iterations: usize },
}

const LP_TOL: f64 = 1e-12;

fn check_matrix(g: &[Vec<f64>]) -> Result<(usize, usize)> {
    let rows = g.len();
    let cols = g.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidStrategy("empty utility matrix".into()));
    }
    for (i, r) in g.iter().enumerate() {
        if r.len() != cols {
            return Err(Error::InvalidStrategy(format!("utility row {i} has {} entries, expected {cols}", r.len())));
        }
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteUtility { row: i, col: j });
        }
    }
    Ok((rows, cols))
}

/// Exact equilibrium through the minimax linear program.
///
/// After shifting every entry to be at least 1, the row strategy is
/// `x / sum(x)` for the optimum of `max 1^T x  s.t.  A^T x <= 1, x >= 0`
/// and the column strategy comes from the dual prices of the same tableau.
/// Pivots follow Bland's rule, so the result is deterministic.
pub fn solve_meta_nash(g: &[Vec<f64>]) -> Result<NashSolution> {
    let (m, k) = check_matrix(g)?;
    let min = g.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let shift = 1.0 - min;

    // Tableau rows: one per column constraint, then the objective row.
    // Columns: m structural variables, k slacks, right-hand side.
    let width = m + k + 1;
    let mut t = vec![vec![0.0; width]; k + 1];
    for j in 0..k {
        for i in 0..m {
            t[j][i] = g[i][j] + shift;
        }
        t[j][m + j] = 1.0;
        t[j][width - 1] = 1.0;
    }
    for i in 0..m {
        t[k][i] = -1.0;
    }
    let mut basis: Vec<usize> = (m..m + k).collect();
    let cap = 50 * (m + k) + 100;
    let mut iterations = 0;
    loop {
        let Some(enter) = (0..m + k).find(|&c| t[k][c] < -LP_TOL) else { break };
        let mut leave: Option<usize> = None;
        for r in 0..k {
            if t[r][enter] > LP_TOL {
                let ratio = t[r][width - 1] / t[r][enter];
                leave = match leave {
                    None => Some(r),
                    Some(best) => {
                        let br = t[best][width - 1] / t[best][enter];
                        if ratio < br - LP_TOL || ((ratio - br).abs() <= LP_TOL && basis[r] < basis[best]) {
                            Some(r)
                        } else {
                            Some(best)
                        }
                    }
                };
            }
        }
        let Some(leave) = leave else {
            return Err(Error::LpFailed("unbounded program".into()));
        };
        let p = t[leave][enter];
        t[leave].iter_mut().for_each(|v| *v /= p);
        let pivot_row = t[leave].clone();
        for (r, row) in t.iter_mut().enumerate() {
            if r != leave {
                let f = row[enter];
                if f != 0.0 {
                    row.iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
                }
            }
        }
        basis[leave] = enter;
        iterations += 1;
        if iterations > cap {
            return Err(Error::LpFailed(format!("no optimum after {cap} pivots")));
        }
    }
    let mut x = vec![0.0; m];
    for (r, &b) in basis.iter().enumerate() {
        if b < m {
            x[b] = t[r][width - 1];
        }
    }
    let y: Vec<f64> = (0..k).map(|j| t[k][m + j].max(0.0)).collect();
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    if !(sx > 0.0) || !(sy > 0.0) {
        return Err(Error::LpFailed("degenerate optimum".into()));
    }
    let sigma_ss: Vec<f64> = x.iter().map(|v| v / sx).collect();
    let sigma_dg: Vec<f64> = y.iter().map(|v| v / sy).collect();
    let value = bilinear(g, &sigma_ss, &sigma_dg);
    Ok(NashSolution { sigma_ss, sigma_dg, value })
}

/// Approximate equilibrium by simultaneous fictitious play (averaged strategies).
pub fn fictitious_play(g: &[Vec<f64>], iterations: usize) -> Result<NashSolution> {
    let (m, k) = check_matrix(g)?;
    let iterations = iterations.max(1);
    let mut row_counts = vec![0usize; m];
    let mut col_counts = vec![0usize; k];
    // Cumulative payoffs against the opponent's empirical play.
    let mut row_loss = vec![0.0; m];
    let mut col_gain = vec![0.0; k];
    let (mut r, mut c) = (0usize, 0usize);
    for _ in 0..iterations {
        row_counts[r] += 1;
        col_counts[c] += 1;
        for i in 0..m {
            row_loss[i] += g[i][c];
        }
        for (j, gain) in col_gain.iter_mut().enumerate() {
            *gain += g[r][j];
        }
        r = argmin(&row_loss);
        c = argmax(&col_gain);
    }
    let sigma_ss: Vec<f64> = row_counts.iter().map(|&n| n as f64 / iterations as f64).collect();
    let sigma_dg: Vec<f64> = col_counts.iter().map(|&n| n as f64 / iterations as f64).collect();
    let value = bilinear(g, &sigma_ss, &sigma_dg);
    Ok(NashSolution { sigma_ss, sigma_dg, value })
}

pub fn solve_with(g: &[Vec<f64>], solver: MetaSolver) -> Result<NashSolution> {
    match solver {
        MetaSolver::Lp => solve_meta_nash(g),
        MetaSolver::FictitiousPlay { iterations } => fictitious_play(g, iterations),
    }
}

fn argmin(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] < v[b] { i } else { b })
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

pub fn bilinear(g: &[Vec<f64>], p: &[f64], q: &[f64]) -> f64 {
    g.iter().zip(p).map(|(row, pi)| pi * row.iter().zip(q).map(|(v, qj)| v * qj).sum::<f64>()).sum()
}

/// `max_j (p^T G)_j - min_i (G q)_i`: the total gain available to the two
/// players from pure deviations.
pub fn exploitability(g: &[Vec<f64>], sigma_ss: &[f64], sigma_dg: &[f64]) -> f64 {
    let k = sigma_dg.len();
    let best_dg = (0..k)
        .map(|j| g.iter().zip(sigma_ss).map(|(row, p)| p * row[j]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let best_ss = g
        .iter()
        .map(|row| row.iter().zip(sigma_dg).map(|(v, q)| v * q).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    (best_dg - best_ss).max(0.0)
}
