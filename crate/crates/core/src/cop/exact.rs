use super::instance::{Instance, Tour};
use crate::error::{Error, Result};

/// Largest instance the Held-Karp oracle accepts by default.
pub const DEFAULT_EXACT_LIMIT: usize = 14;

/// Optimal tour by the Held-Karp dynamic program, `O(n^2 2^n)`.
///
/// City 0 is fixed as the start; `best[S][j]` is the shortest path from 0
/// through the subset `S` of cities `1..n` ending at `j`.
pub fn exact_oracle(instance: &Instance, limit: usize) -> Result<Tour> {
    let n = instance.n();
    if n > limit {
        return Err(Error::ExactOracleCapacity { n, limit });
    }
    if n <= 3 {
        return Tour::from_order(instance, (0..n).collect());
    }
    let d = instance.distance_matrix();
    let m = n - 1;
    let full = (1usize << m) - 1;
    let mut best = vec![f64::INFINITY; (full + 1) * m];
    let mut parent = vec![u8::MAX; (full + 1) * m];
    for j in 0..m {
        best[(1 << j) * m + j] = d[j + 1];
    }
    for set in 1..=full {
        for j in 0..m {
            if set & (1 << j) == 0 {
                continue;
            }
            let cur = best[set * m + j];
            if !cur.is_finite() {
                continue;
            }
            let mut rest = full & !set;
            while rest != 0 {
                let k = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                let next = set | (1 << k);
                let cand = cur + d[(j + 1) * n + k + 1];
                if cand < best[next * m + k] {
                    best[next * m + k] = cand;
                    parent[next * m + k] = j as u8;
                }
            }
        }
    }
    let mut last = 0;
    let mut total = f64::INFINITY;
    for j in 0..m {
        let c = best[full * m + j] + d[(j + 1) * n];
        if c < total {
            total = c;
            last = j;
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut set = full;
    let mut j = last;
    loop {
        order.push(j + 1);
        let p = parent[set * m + j];
        set &= !(1 << j);
        if p == u8::MAX {
            break;
        }
        j = p as usize;
    }
    order.push(0);
    order.reverse();
    Tour::from_order(instance, order)
}
