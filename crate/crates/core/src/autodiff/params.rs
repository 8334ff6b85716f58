use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::matrix::Matrix;
use super::tape::{Gradients, Tape, Var};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub moment1: Vec<f64>,
    pub moment2: Vec<f64>,
}

/// Named trainable arrays together with their Adam state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    params: Vec<Param>,
    step: u64,
}

/// Gradients aligned with the order of a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradSet {
    pub grads: Vec<Vec<f64>>,
}

/// Tape handles for every parameter of a set, in set order.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
    names: Vec<String>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Var {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("parameter `{name}` not bound"));
        self.vars[i]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) {
        let name = name.into();
        assert!(self.params.iter().all(|p| p.name != name), "duplicate parameter `{name}`");
        let n = value.len();
        self.params.push(Param { name, value, moment1: vec![0.0; n], moment2: vec![0.0; n] });
    }

    /// Inserts a `rows x cols` parameter drawn uniformly from `[-bound, bound]`.
    pub fn insert_uniform(&mut self, name: &str, rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) {
        let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
        self.insert(name, Matrix::from_vec(rows, cols, data));
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.params.iter_mut().find(|p| p.name == name).map(|p| &mut p.value)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// All values flattened in set order.
    pub fn flat(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.value.data.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_scalars());
        let mut off = 0;
        for p in &mut self.params {
            let n = p.value.len();
            p.value.data.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let vars = self.params.iter().map(|p| tape.param(p.value.clone())).collect();
        Bound { vars, names: self.params.iter().map(|p| p.name.clone()).collect() }
    }

    pub fn zero_grads(&self) -> GradSet {
        GradSet { grads: self.params.iter().map(|p| vec![0.0; p.value.len()]).collect() }
    }

    /// Collects adjoints of the bound parameters; missing adjoints are zero.
    pub fn grads_from(&self, bound: &Bound, g: &Gradients) -> GradSet {
        let mut out = self.zero_grads();
        out.add_from(bound, g, 1.0);
        out
    }

    /// One Adam step: `theta -= lr * m_hat / (sqrt(v_hat) + eps)`.
    ///
    /// Non-finite gradients abort the update before any state changes.
    pub fn apply_update(&mut self, grads: &GradSet, learning_rate: f64) -> Result<()> {
        if grads.grads.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                op: "apply_update",
                left: (self.params.len(), 1),
                right: (grads.grads.len(), 1),
            });
        }
        for (p, g) in self.params.iter().zip(&grads.grads) {
            if g.len() != p.value.len() {
                return Err(Error::ShapeMismatch { op: "apply_update", left: p.value.shape(), right: (g.len(), 1) });
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient(p.name.clone()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        for (p, g) in self.params.iter_mut().zip(&grads.grads) {
            for i in 0..g.len() {
                let m = ADAM_BETA1 * p.moment1[i] + (1.0 - ADAM_BETA1) * g[i];
                let v = ADAM_BETA2 * p.moment2[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                p.moment1[i] = m;
                p.moment2[i] = v;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                p.value.data[i] -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }

    /// Drops optimizer state, keeping values.
    pub fn reset_optimizer(&mut self) {
        self.step = 0;
        for p in &mut self.params {
            p.moment1.iter_mut().for_each(|x| *x = 0.0);
            p.moment2.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        for p in &self.params {
            let entry = ParamEntry {
                shape: [p.value.rows, p.value.cols],
                values: p.value.data.clone(),
                moment1: p.moment1.clone(),
                moment2: p.moment2.clone(),
                step: self.step,
            };
            map.insert(p.name.clone(), serde_json::to_value(entry).expect("param serializes"));
        }
        Value::Object(map)
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Checkpoint("parameter block is not an object".into()))?;
        let mut set = ParamSet::new();
        let mut step = None;
        for (name, v) in obj {
            let e: ParamEntry = serde_json::from_value(v.clone())?;
            let n = e.shape[0] * e.shape[1];
            if e.values.len() != n || e.moment1.len() != n || e.moment2.len() != n {
                return Err(Error::Checkpoint(format!("parameter `{name}` has inconsistent lengths")));
            }
            if step.is_some_and(|s| s != e.step) {
                return Err(Error::Checkpoint("parameters disagree on step count".into()));
            }
            step = Some(e.step);
            set.params.push(Param {
                name: name.clone(),
                value: Matrix::from_vec(e.shape[0], e.shape[1], e.values),
                moment1: e.moment1,
                moment2: e.moment2,
            });
        }
        set.step = step.unwrap_or(0);
        Ok(set)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamEntry {
    shape: [usize; 2],
    values: Vec<f64>,
    moment1: Vec<f64>,
    moment2: Vec<f64>,
    step: u64,
}

impl GradSet {
    pub fn add_from(&mut self, bound: &Bound, g: &Gradients, weight: f64) {
        for (acc, &v) in self.grads.iter_mut().zip(bound.vars()) {
            if let Some(m) = g.wrt(v) {
                for (a, x) in acc.iter_mut().zip(&m.data) {
                    *a += weight * x;
                }
            }
        }
    }

    pub fn add_scaled(&mut self, other: &GradSet, weight: f64) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += weight * y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.grads.iter_mut().flatten().for_each(|x| *x *= k);
    }

    pub fn norm(&self) -> f64 {
        self.grads.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Rescales to at most `max_norm` in global L2 norm.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let n = self.norm();
        if n > max_norm && n.is_finite() {
            self.scale(max_norm / n);
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.grads.iter().flatten().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().flatten().all(|x| x.is_finite())
    }
}

/// Writes a checkpoint document: `{"metadata": .., "header": .., "params": {name: {..}}}`.
pub fn checkpoint_json(params: &ParamSet, header: Value, metadata: Value) -> Value {
    let mut doc = Map::new();
    doc.insert("metadata".into(), metadata);
    doc.insert("header".into(), header);
    doc.insert("params".into(), params.to_json());
    Value::Object(doc)
}

/// Splits a checkpoint document into `(params, header, metadata)`.
pub fn parse_checkpoint(doc: &Value) -> Result<(ParamSet, Value, Value)> {
    let obj = doc.as_object().ok_or_else(|| Error::Checkpoint("checkpoint is not an object".into()))?;
    let params = obj.get("params").ok_or_else(|| Error::Checkpoint("missing `params`".into()))?;
    Ok((
        ParamSet::from_json(params)?,
        obj.get("header").cloned().unwrap_or(Value::Null),
        obj.get("metadata").cloned().unwrap_or(Value::Null),
    ))
}
