use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::instance::{Instance, Tour};
use crate::error::Result;
use crate::seed;

/// Random-insertion restarts used by [`proxy_oracle`].
pub const PROXY_RANDOM_RESTARTS: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InsertionMethod {
    NearestInsertion,
    RandomInsertion,
    FarthestInsertion,
}

impl InsertionMethod {
    pub const ALL: [InsertionMethod; 3] =
        [Self::NearestInsertion, Self::RandomInsertion, Self::FarthestInsertion];

    pub fn name(self) -> &'static str {
        match self {
            Self::NearestInsertion => "nearest-insertion",
            Self::RandomInsertion => "random-insertion",
            Self::FarthestInsertion => "farthest-insertion",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s || m.name().trim_end_matches("-insertion") == s)
    }
}

/// Builds a tour by insertion: pick the next city by `method`, then splice
/// it into the edge with the smallest length increase.
///
/// Nearest/farthest start from city 0; random insertion follows a seeded
/// random permutation. `seed` only matters for random insertion.
pub fn heuristic_solve(instance: &Instance, method: InsertionMethod, seed: u64) -> Result<Tour> {
    let n = instance.n();
    if n <= 3 {
        return Tour::from_order(instance, (0..n).collect());
    }
    let d = instance.distance_matrix();
    let random_order = (method == InsertionMethod::RandomInsertion).then(|| {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut seed::rng(seed));
        perm
    });
    let start = random_order.as_ref().map_or(0, |p| p[0]);
    let mut tour = vec![start];
    let mut in_tour = vec![false; n];
    in_tour[start] = true;
    // distance from each city to the partial tour
    let mut to_tour: Vec<f64> = (0..n).map(|j| d[start * n + j]).collect();

    for step in 1..n {
        let next = match method {
            InsertionMethod::RandomInsertion => random_order.as_ref().expect("random order")[step],
            InsertionMethod::NearestInsertion => (0..n)
                .filter(|&j| !in_tour[j])
                .min_by(|&a, &b| to_tour[a].total_cmp(&to_tour[b]).then(a.cmp(&b)))
                .expect("unvisited city"),
            InsertionMethod::FarthestInsertion => (0..n)
                .filter(|&j| !in_tour[j])
                .max_by(|&a, &b| to_tour[a].total_cmp(&to_tour[b]).then(b.cmp(&a)))
                .expect("unvisited city"),
        };
        let pos = if tour.len() == 1 {
            1
        } else {
            let mut best = (f64::INFINITY, 0);
            for i in 0..tour.len() {
                let (a, b) = (tour[i], tour[(i + 1) % tour.len()]);
                let delta = d[a * n + next] + d[next * n + b] - d[a * n + b];
                if delta < best.0 {
                    best = (delta, i + 1);
                }
            }
            best.1
        };
        tour.insert(pos, next);
        in_tour[next] = true;
        for j in 0..n {
            to_tour[j] = to_tour[j].min(d[next * n + j]);
        }
    }
    Tour::from_order(instance, tour)
}

/// Best of farthest, nearest and `PROXY_RANDOM_RESTARTS` seeded random insertions.
pub fn proxy_oracle(instance: &Instance, seed: u64) -> Result<Tour> {
    let mut best = heuristic_solve(instance, InsertionMethod::FarthestInsertion, 0)?;
    let mut consider = |t: Tour| {
        if t.length < best.length {
            best = t;
        }
    };
    consider(heuristic_solve(instance, InsertionMethod::NearestInsertion, 0)?);
    for r in 0..PROXY_RANDOM_RESTARTS {
        consider(heuristic_solve(
            instance,
            InsertionMethod::RandomInsertion,
            seed::derive2(seed, seed::stream::PROXY, r),
        )?);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Instance {
        Instance::new(vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]).unwrap()
    }

    #[test]
    fn insertion_is_optimal_on_the_square() {
        for m in InsertionMethod::ALL {
            for s in 0..5 {
                let t = heuristic_solve(&square(), m, s).unwrap();
                assert!((t.length - 4.0).abs() < 1e-12, "{m:?}");
            }
        }
        assert!((proxy_oracle(&square(), 3).unwrap().length - 4.0).abs() < 1e-12);
    }

    #[test]
    fn two_cities_give_the_trivial_cycle() {
        let inst = Instance::new(vec![[0.1, 0.2], [0.4, 0.6]]).unwrap();
        for m in InsertionMethod::ALL {
            let t = heuristic_solve(&inst, m, 0).unwrap();
            assert_eq!(t.order, vec![0, 1]);
            assert!((t.length - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn method_names_parse() {
        for m in InsertionMethod::ALL {
            assert_eq!(InsertionMethod::parse(m.name()), Some(m));
        }
        assert_eq!(InsertionMethod::parse("nearest"), Some(InsertionMethod::NearestInsertion));
    }
}
