use rand::Rng as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::autodiff::{checkpoint_json, parse_checkpoint, Bound, Matrix, ParamSet, Tape, Var};
use crate::cop::{Instance, Point};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};

/// Margin by which samples whose squashed coordinate would round to 0 or 1
/// are pulled back into the open unit square.
pub const EDGE_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub coupling_layers: usize,
    pub hidden: usize,
    /// Wraps the couplings in `logit` / logistic maps so the codomain is `(0,1)^2`.
    pub squash: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { coupling_layers: 5, hidden: 32, squash: true }
    }
}

/// Real-NVP density over single nodes in the unit square.
///
/// Coupling layer `l` conditions on coordinate `l % 2` and applies
/// `u' = u * exp(s(a)) + t(a)` to the other one, where `s` and `t` are
/// `1 -> hidden -> hidden -> 1` tanh networks of the conditioning value `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowDistribution {
    config: FlowConfig,
    params: ParamSet,
}

fn logit(x: f64) -> f64 {
    x.ln() - (1.0 - x).ln()
}

fn logistic(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `ln(sigma(v) * (1 - sigma(v)))`, stable for large `|v|`.
fn log_logistic_slope(v: f64) -> f64 {
    -softplus(v) - softplus(-v)
}

fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

impl FlowDistribution {
    /// Random hidden layers with zeroed output layers: the map starts as the identity.
    pub fn new(config: FlowConfig, seed: u64) -> Result<Self> {
        let mut flow = Self::random(config, seed)?;
        for l in 0..config.coupling_layers {
            for net in ["s", "t"] {
                for w in ["w3", "b3"] {
                    let m = flow.params.get_mut(&format!("c{l}.{net}.{w}")).expect("layer exists");
                    m.data.iter_mut().for_each(|x| *x = 0.0);
                }
            }
        }
        Ok(flow)
    }

    /// Every weight uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, output layers included.
    pub fn random(config: FlowConfig, seed: u64) -> Result<Self> {
        if config.coupling_layers == 0 || config.hidden == 0 {
            return Err(Error::Config(vec![format!(
                "flow needs at least one coupling layer and hidden unit, got {config:?}"
            )]));
        }
        let mut rng = seed::rng(seed::derive(seed, seed::stream::INIT));
        let h = config.hidden;
        let hb = 1.0 / (h as f64).sqrt();
        let mut params = ParamSet::new();
        for l in 0..config.coupling_layers {
            for net in ["s", "t"] {
                let p = |w: &str| format!("c{l}.{net}.{w}");
                params.insert_uniform(&p("w1"), 1, h, 1.0, &mut rng);
                params.insert_uniform(&p("b1"), 1, h, 1.0, &mut rng);
                params.insert_uniform(&p("w2"), h, h, hb, &mut rng);
                params.insert_uniform(&p("b2"), 1, h, hb, &mut rng);
                params.insert_uniform(&p("w3"), h, 1, hb, &mut rng);
                params.insert_uniform(&p("b3"), 1, 1, hb, &mut rng);
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> FlowConfig {
        self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn net(&self, layer: usize, net: &str, a: f64) -> f64 {
        let base = (2 * layer + usize::from(net == "t")) * 6;
        let p = &self.params.params()[base..base + 6];
        let (w1, b1, w2, b2, w3, b3) = (&p[0].value, &p[1].value, &p[2].value, &p[3].value, &p[4].value, &p[5].value);
        let h = self.config.hidden;
        let h1: Vec<f64> = (0..h).map(|j| (a * w1.data[j] + b1.data[j]).tanh()).collect();
        let mut out = b3.data[0];
        for k in 0..h {
            let mut acc = b2.data[k];
            for (j, v) in h1.iter().enumerate() {
                acc += v * w2.data[j * h + k];
            }
            out += acc.tanh() * w3.data[k];
        }
        out
    }

    /// Maps a prior draw to a node, returning the node and `ln|det dG/dz|`.
    pub fn forward(&self, z: Point) -> (Point, f64) {
        let mut log_det = 0.0;
        let mut u = z;
        if self.config.squash {
            for c in 0..2 {
                log_det -= z[c].ln() + (1.0 - z[c]).ln();
                u[c] = logit(z[c]);
            }
        }
        for l in 0..self.config.coupling_layers {
            let c = l % 2;
            let s = self.net(l, "s", u[c]);
            let t = self.net(l, "t", u[c]);
            u[1 - c] = u[1 - c] * s.exp() + t;
            log_det += s;
        }
        if self.config.squash {
            for c in 0..2 {
                log_det += log_logistic_slope(u[c]);
                u[c] = logistic(u[c]);
            }
        }
        (u, log_det)
    }

    /// Inverse map with `ln|det dG^{-1}/dx|`; `None` outside the domain or the prior support.
    pub fn inverse(&self, x: Point) -> Option<(Point, f64)> {
        if !x.iter().all(|v| v.is_finite()) {
            return None;
        }
        let mut log_det = 0.0;
        let mut u = x;
        if self.config.squash {
            if x.iter().any(|&v| v <= 0.0 || v >= 1.0) {
                return None;
            }
            for c in 0..2 {
                log_det -= x[c].ln() + (1.0 - x[c]).ln();
                u[c] = logit(x[c]);
            }
        }
        for l in (0..self.config.coupling_layers).rev() {
            let c = l % 2;
            let s = self.net(l, "s", u[c]);
            let t = self.net(l, "t", u[c]);
            u[1 - c] = (u[1 - c] - t) * (-s).exp();
            log_det -= s;
        }
        if self.config.squash {
            for c in 0..2 {
                log_det += log_logistic_slope(u[c]);
                u[c] = logistic(u[c]);
            }
        } else if u.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return None;
        }
        Some((u, log_det))
    }

    /// `ln p_X(x)`; `-inf` outside `(0,1)^2` or outside the image of the prior.
    pub fn log_density(&self, x: Point) -> f64 {
        if x.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return f64::NEG_INFINITY;
        }
        match self.inverse(x) {
            Some((_, ld)) if ld.is_finite() => ld,
            _ => f64::NEG_INFINITY,
        }
    }

    /// Sum of node log-densities.
    pub fn instance_log_density(&self, instance: &Instance) -> f64 {
        self.points_log_density(instance.points())
    }

    pub fn points_log_density(&self, points: &[Point]) -> f64 {
        points.iter().map(|p| self.log_density(*p)).sum()
    }

    /// `n` i.i.d. nodes, each pushed forward from a uniform prior draw.
    pub fn sample_points(&self, n: usize, rng: &mut Rng) -> Result<Vec<Point>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let z = [open_unit(rng), open_unit(rng)];
            let (mut x, _) = self.forward(z);
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteFlow);
            }
            if self.config.squash {
                for v in &mut x {
                    *v = v.clamp(EDGE_GUARD, 1.0 - EDGE_GUARD);
                }
            }
            out.push(x);
        }
        Ok(out)
    }

    /// `count` instances of size `n`; instance `i` uses its own derived stream.
    pub fn sample(&self, n: usize, count: usize, seed: u64) -> Result<Vec<Instance>> {
        (0..count)
            .map(|i| {
                let mut rng = seed::rng(seed::derive2(seed, seed::stream::SAMPLE, i as u64));
                let pts = self.sample_points(n, &mut rng)?;
                Instance::new(pts).map_err(|_| Error::NonFiniteFlow)
            })
            .collect()
    }

    fn net_tape(&self, tape: &mut Tape, b: &Bound, layer: usize, net: &str, a: Var) -> Result<Var> {
        let p = |w: &str| b.get(&format!("c{layer}.{net}.{w}"));
        let h = tape.matmul(a, p("w1"))?;
        let h = tape.add_row(h, p("b1"))?;
        let h = tape.tanh(h);
        let h = tape.matmul(h, p("w2"))?;
        let h = tape.add_row(h, p("b2"))?;
        let h = tape.tanh(h);
        let o = tape.matmul(h, p("w3"))?;
        tape.add_row(o, p("b3"))
    }

    /// Per-node log-densities (`N x 1`) recorded on `tape` as functions of the parameters.
    ///
    /// Fails if any point lies outside the support, where the density is not differentiable.
    pub fn log_density_tape(&self, tape: &mut Tape, b: &Bound, points: &[Point]) -> Result<Var> {
        let n = points.len();
        let outside = || Error::InvalidInstance("point outside the flow support".into());
        let mut base = vec![0.0; n];
        let mut cols = [vec![0.0; n], vec![0.0; n]];
        for (i, p) in points.iter().enumerate() {
            for c in 0..2 {
                if self.config.squash {
                    if !(p[c] > 0.0 && p[c] < 1.0) {
                        return Err(outside());
                    }
                    base[i] -= p[c].ln() + (1.0 - p[c]).ln();
                    cols[c][i] = logit(p[c]);
                } else {
                    cols[c][i] = p[c];
                }
            }
        }
        let mut u = [
            tape.constant(Matrix::from_vec(n, 1, cols[0].clone())),
            tape.constant(Matrix::from_vec(n, 1, cols[1].clone())),
        ];
        let mut acc = tape.constant(Matrix::from_vec(n, 1, base));
        for l in (0..self.config.coupling_layers).rev() {
            let c = l % 2;
            let s = self.net_tape(tape, b, l, "s", u[c])?;
            let t = self.net_tape(tape, b, l, "t", u[c])?;
            let shifted = tape.sub(u[1 - c], t)?;
            let neg_s = tape.neg(s);
            let factor = tape.exp(neg_s);
            u[1 - c] = tape.mul(shifted, factor)?;
            acc = tape.add(acc, neg_s)?;
        }
        if self.config.squash {
            for v in u {
                let a = tape.softplus(v);
                let nv = tape.neg(v);
                let bterm = tape.softplus(nv);
                acc = tape.sub(acc, a)?;
                acc = tape.sub(acc, bterm)?;
            }
        } else {
            for v in u {
                if tape.value(v).data.iter().any(|z| !(0.0..=1.0).contains(z)) {
                    return Err(outside());
                }
            }
        }
        Ok(acc)
    }

    pub fn to_checkpoint(&self, metadata: Value) -> Value {
        let header = json!({
            "coupling_layers": self.config.coupling_layers,
            "hidden": self.config.hidden,
            "squash": self.config.squash,
        });
        checkpoint_json(&self.params, header, metadata)
    }

    pub fn from_checkpoint(doc: &Value) -> Result<Self> {
        let (params, header, _) = parse_checkpoint(doc)?;
        let field = |k: &str| header.get(k).ok_or_else(|| Error::Checkpoint(format!("flow header lacks `{k}`")));
        let coupling_layers = field("coupling_layers")?
            .as_u64()
            .ok_or_else(|| Error::Checkpoint("`coupling_layers` must be an integer".into()))?
            as usize;
        let hidden = match header.get("hidden") {
            Some(v) => v.as_u64().ok_or_else(|| Error::Checkpoint("`hidden` must be an integer".into()))? as usize,
            None => params
                .get("c0.s.w1")
                .map(|m| m.cols)
                .ok_or_else(|| Error::Checkpoint("missing parameter `c0.s.w1`".into()))?,
        };
        let squash = header.get("squash").and_then(Value::as_bool).unwrap_or(true);
        let config = FlowConfig { coupling_layers, hidden, squash };
        let template = Self::random(config, 0)?;
        for p in template.params.params() {
            match params.get(&p.name) {
                Some(m) if m.shape() == p.value.shape() => {}
                Some(m) => {
                    return Err(Error::Checkpoint(format!(
                        "parameter `{}` has shape {:?}, expected {:?}",
                        p.name,
                        m.shape(),
                        p.value.shape()
                    )))
                }
                None => return Err(Error::Checkpoint(format!("missing parameter `{}`", p.name))),
            }
        }
        if params.params().len() != template.params.params().len() {
            return Err(Error::Checkpoint("unexpected extra flow parameters".into()));
        }
        Ok(Self { config, params })
    }
}

fn open_unit(rng: &mut Rng) -> f64 {
    loop {
        let z: f64 = rng.random();
        if z > 0.0 {
            return z;
        }
    }
}
