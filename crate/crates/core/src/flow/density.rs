use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::FlowDistribution;
use crate::cop::{check_simplex, Point};
use crate::error::{Error, Result};

/// `sum_i w_i p_i(x)`, where components with `-inf` log-density contribute 0.
pub fn mixture_density(weights: &[f64], flows: &[&FlowDistribution], point: Point) -> Result<f64> {
    check_simplex(weights)?;
    if weights.len() != flows.len() {
        return Err(Error::InvalidStrategy(format!("{} weights for {} flows", weights.len(), flows.len())));
    }
    Ok(weights
        .iter()
        .zip(flows)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, f)| {
            let ld = f.log_density(point);
            if ld == f64::NEG_INFINITY {
                0.0
            } else {
                w * ld.exp()
            }
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityCell {
    pub x: f64,
    pub y: f64,
    pub density: f64,
}

/// Mixture density at the centres of a `resolution x resolution` grid over the unit square.
pub fn density_grid(weights: &[f64], flows: &[&FlowDistribution], resolution: usize) -> Result<Vec<DensityCell>> {
    if resolution == 0 {
        return Err(Error::Config(vec!["grid resolution must be positive".into()]));
    }
    let h = 1.0 / resolution as f64;
    let mut out = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        for j in 0..resolution {
            let (x, y) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            out.push(DensityCell { x, y, density: mixture_density(weights, flows, [x, y])? });
        }
    }
    Ok(out)
}

pub fn write_density_csv(path: &Path, cells: &[DensityCell]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(crate::cop::io::csv_err)?;
    if cells.is_empty() {
        w.write_record(["x", "y", "density"]).map_err(crate::cop::io::csv_err)?;
    }
    for c in cells {
        w.serialize(c).map_err(crate::cop::io::csv_err)?;
    }
    w.flush()?;
    Ok(())
}
