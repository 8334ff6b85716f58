use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::curriculum::AspConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Instances per scale (`M`).
    pub samples: usize,
    pub scales: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { samples: 64, scales: vec![5, 10, 15] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeConfig {
    /// Grid points per axis; odd so the unperturbed solver sits on the grid.
    pub steps: usize,
    /// The grid spans `[-extent, extent]` along both directions.
    pub extent: f64,
    pub instances: usize,
    pub scale: usize,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        Self { steps: 11, extent: 1.0, instances: 100, scale: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeaknessConfig {
    pub resolution: usize,
}

impl Default for WeaknessConfig {
    fn default() -> Self {
        Self { resolution: 50 }
    }
}

/// Every tunable of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub asp: AspConfig,
    pub eval: EvalConfig,
    pub landscape: LandscapeConfig,
    pub weakness: WeaknessConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("runs/default"),
            asp: AspConfig::default(),
            eval: EvalConfig::default(),
            landscape: LandscapeConfig::default(),
            weakness: WeaknessConfig::default(),
        }
    }
}

/// Objects carrying this key are internally tagged enums whose fields vary
/// by variant; they are replaced wholesale and left to serde.
const TAG_KEY: &str = "kind";

fn is_tagged(v: &Map<String, Value>) -> bool {
    v.get(TAG_KEY).is_some_and(Value::is_string)
}

fn merge(base: &mut Value, patch: &Value, path: &str, unknown: &mut Vec<String>) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) if !is_tagged(b) => {
            for (k, v) in p {
                let sub = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v, &sub, unknown),
                    None => unknown.push(sub),
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

impl RunConfig {
    /// Overlays `doc` on the defaults. Keys absent from the schema are all
    /// reported together.
    pub fn from_value(doc: &Value) -> Result<Self> {
        if !doc.is_object() {
            return Err(Error::Config(vec!["config root must be a JSON object".into()]));
        }
        let mut base = serde_json::to_value(Self::default())?;
        let mut unknown = Vec::new();
        merge(&mut base, doc, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(Error::Config(unknown.into_iter().map(|k| format!("unknown key `{k}`")).collect()));
        }
        serde_json::from_value(base).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })?;
        Self::from_value(&doc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = match self.asp.validate() {
            Ok(()) => Vec::new(),
            Err(Error::Config(e)) => e,
            Err(e) => return Err(e),
        };
        if self.eval.samples == 0 {
            errs.push("eval.samples must be at least 1".into());
        }
        if let Some(n) = self.eval.scales.iter().find(|&&n| n < 2) {
            errs.push(format!("eval.scales entries must be at least 2, got {n}"));
        }
        if self.landscape.steps < 3 || self.landscape.steps.is_multiple_of(2) {
            errs.push(format!("landscape.steps must be odd and at least 3, got {}", self.landscape.steps));
        }
        if !(self.landscape.extent >= 0.0 && self.landscape.extent.is_finite()) {
            errs.push(format!("landscape.extent must be finite and non-negative, got {}", self.landscape.extent));
        }
        if self.landscape.instances == 0 {
            errs.push("landscape.instances must be at least 1".into());
        }
        if self.landscape.scale < 2 {
            errs.push("landscape.scale must be at least 2".into());
        }
        if self.weakness.resolution == 0 {
            errs.push("weakness.resolution must be at least 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Canonical JSON echo of the effective config.
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical compact JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(text.as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
