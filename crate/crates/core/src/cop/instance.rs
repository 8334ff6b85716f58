use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// A Euclidean TSP instance with every coordinate in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    n: usize,
    points: Vec<Point>,
}

impl Instance {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInstance(format!("need at least 2 points, got {}", points.len())));
        }
        for (i, p) in points.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite() && (0.0..=1.0).contains(c)) {
                return Err(Error::InvalidInstance(format!("point {i} = {p:?} lies outside the unit square")));
            }
        }
        Ok(Self { n: points.len(), points })
    }

    /// Re-checks invariants after deserialisation.
    pub fn validated(self) -> Result<Self> {
        if self.n != self.points.len() {
            return Err(Error::InvalidInstance(format!(
                "declared n={} but {} points",
                self.n,
                self.points.len()
            )));
        }
        Self::new(self.points)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.points[i], self.points[j]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    /// Full pairwise distance matrix, row-major.
    pub fn distance_matrix(&self) -> Vec<f64> {
        let n = self.n;
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = self.dist(i, j);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        d
    }
}

/// A closed tour: a permutation of the instance indices and its cycle length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tour {
    pub order: Vec<usize>,
    pub length: f64,
}

impl Tour {
    pub fn from_order(instance: &Instance, order: Vec<usize>) -> Result<Self> {
        let length = tour_length(instance, &order)?;
        Ok(Self { order, length })
    }
}

fn check_permutation(n: usize, order: &[usize]) -> Result<()> {
    if order.len() != n {
        return Err(Error::MalformedTour(format!("expected {n} cities, got {}", order.len())));
    }
    let mut seen = vec![false; n];
    for &c in order {
        if c >= n || seen[c] {
            return Err(Error::MalformedTour(format!("city {c} is out of range or repeated")));
        }
        seen[c] = true;
    }
    Ok(())
}

/// Closed-cycle Euclidean length of `order`, including the edge back to the start.
pub fn tour_length(instance: &Instance, order: &[usize]) -> Result<f64> {
    check_permutation(instance.n(), order)?;
    Ok(order
        .iter()
        .zip(order.iter().cycle().skip(1))
        .map(|(&a, &b)| instance.dist(a, b))
        .sum())
}
