//! Dataset and gap-table persistence.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use serde_json::{json, Value};

use super::distribution::{DistKind, InstanceDistribution, MixedGaussian};
use super::instance::Instance;
use crate::error::{Error, Result};
use crate::flow::FlowDistribution;

/// Writes one `{"n": .., "points": [[x, y], ..]}` object per line.
pub fn write_jsonl(path: &Path, instances: &[Instance]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for inst in instances {
        serde_json::to_writer(&mut w, inst)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Instance>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: Instance =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        out.push(inst.validated().map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?);
    }
    Ok(out)
}

/// One row of a gap table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub solver: String,
    pub distribution: String,
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub mean_gap: f64,
    pub oracle_kind: String,
    pub seed: u64,
}

pub const GAP_CSV_HEADER: &str = "solver,distribution,n,M,mean_gap,oracle_kind,seed";

pub fn write_gap_csv(path: &Path, rows: &[GapRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    if rows.is_empty() {
        w.write_record(GAP_CSV_HEADER.split(',')).map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_gap_csv(path: &Path) -> Result<Vec<GapRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Self-contained JSON description of a distribution; flows are stored as
/// full checkpoints so the document does not depend on any other file.
pub fn distribution_to_json(dist: &InstanceDistribution) -> Value {
    match &dist.kind {
        DistKind::UniformSquare => json!({"kind": "uniform", "scale": dist.scale}),
        DistKind::MixedGaussian(p) => json!({"kind": "mixed_gaussian", "scale": dist.scale, "params": p}),
        DistKind::Flow(f) => json!({"kind": "flow", "scale": dist.scale, "checkpoint": f.to_checkpoint(Value::Null)}),
        DistKind::Mixture { weights, components } => json!({
            "kind": "mixture",
            "scale": dist.scale,
            "weights": weights,
            "components": components.iter().map(distribution_to_json).collect::<Vec<_>>(),
        }),
        DistKind::Empirical(data) => json!({"kind": "empirical", "scale": dist.scale, "instances": &**data}),
    }
}

pub fn distribution_from_json(doc: &Value) -> Result<InstanceDistribution> {
    let bad = |m: &str| Error::InvalidDistribution(m.to_string());
    let kind = doc.get("kind").and_then(Value::as_str).ok_or_else(|| bad("missing `kind`"))?;
    let scale = || {
        doc.get("scale").and_then(Value::as_u64).map(|v| v as usize).ok_or_else(|| bad("missing `scale`"))
    };
    let field = |k: &str| doc.get(k).cloned().ok_or_else(|| bad(&format!("{kind} distribution lacks `{k}`")));
    let dist = match kind {
        "uniform" => InstanceDistribution::uniform(scale()?),
        "mixed_gaussian" => {
            InstanceDistribution::mixed_gaussian(scale()?, serde_json::from_value::<MixedGaussian>(field("params")?)?)
        }
        "flow" => InstanceDistribution::flow(scale()?, FlowDistribution::from_checkpoint(&field("checkpoint")?)?),
        "mixture" => {
            let weights: Vec<f64> = serde_json::from_value(field("weights")?)?;
            let components = field("components")?
                .as_array()
                .ok_or_else(|| bad("`components` is not an array"))?
                .iter()
                .map(distribution_from_json)
                .collect::<Result<Vec<_>>>()?;
            InstanceDistribution::mixture(weights, components)?
        }
        "empirical" => {
            let instances: Vec<Instance> = serde_json::from_value(field("instances")?)?;
            InstanceDistribution::empirical(instances.into_iter().map(Instance::validated).collect::<Result<_>>()?)?
        }
        other => return Err(bad(&format!("unknown distribution kind `{other}`"))),
    };
    dist.validate()?;
    Ok(dist)
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse { line, msg: e.to_string() }
}
