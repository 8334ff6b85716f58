use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::autodiff::{checkpoint_json, parse_checkpoint, Bound, ParamSet, Tape, Var};
use crate::cop::{Instance, Tour, TourSolver};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub embed_dim: usize,
    pub heads: usize,
    pub blocks: usize,
    pub ff_hidden: usize,
    /// Pointer logits are `logit_clip * tanh(.)`.
    pub logit_clip: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { embed_dim: 64, heads: 4, blocks: 2, ff_hidden: 128, logit_clip: 10.0 }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.embed_dim == 0 || self.heads == 0 || !self.embed_dim.is_multiple_of(self.heads) {
            errs.push(format!("policy.embed_dim ({}) must be a positive multiple of policy.heads ({})", self.embed_dim, self.heads));
        }
        if self.ff_hidden == 0 {
            errs.push("policy.ff_hidden must be positive".into());
        }
        if !(self.logit_clip > 0.0) {
            errs.push("policy.logit_clip must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Greedy,
    Sample,
}

/// Autoregressive attention/pointer policy over TSP tours.
///
/// The start city is drawn uniformly in sample mode and fixed to city 0 in
/// greedy mode. Every later choice comes from the pointer decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverPolicy {
    pub config: PolicyConfig,
    pub params: ParamSet,
    pub decode_mode: DecodeMode,
    /// Exponential-moving-average cost baseline per scale.
    pub baselines: BTreeMap<usize, f64>,
}

/// How each step's city is picked.
pub enum Choice<'a> {
    Greedy,
    Sample(&'a mut Rng),
    /// Teacher forcing along a given permutation.
    Forced(&'a [usize]),
}

/// Result of running the policy on one instance.
#[derive(Debug, Clone)]
pub struct DecodeTrace {
    pub order: Vec<usize>,
    /// Exact log-likelihood of `order`, including the start-city term.
    pub log_prob: f64,
    pub step_log_probs: Vec<f64>,
    /// Full next-city distribution at every step.
    pub step_probs: Vec<Vec<f64>>,
    /// Differentiable sum of the decoder's step log-probabilities (the
    /// start-city term is a constant and is left out).
    pub log_prob_var: Option<Var>,
}

struct Encoded {
    h: Var,
    graph: Var,
    glimpse_k: Vec<Var>,
    glimpse_v: Vec<Var>,
    logit_k: Var,
}

fn uniform_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in as f64).sqrt()
}

/// Subtracts the per-feature mean over cities.
fn center_nodes(tape: &mut Tape, h: Var) -> Result<Var> {
    let m = tape.mean_rows(h);
    let m = tape.neg(m);
    tape.add_row(h, m)
}

impl SolverPolicy {
    /// Fresh policy with every weight uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new(config: PolicyConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed::derive(seed, seed::stream::INIT));
        let (d, f) = (config.embed_dim, config.ff_hidden);
        let mut p = ParamSet::new();
        p.insert_uniform("embed.w", 2, d, uniform_bound(2), &mut rng);
        p.insert_uniform("embed.b", 1, d, uniform_bound(2), &mut rng);
        for l in 0..config.blocks {
            for w in ["wq", "wk", "wv", "wo"] {
                p.insert_uniform(&format!("enc{l}.{w}"), d, d, uniform_bound(d), &mut rng);
            }
            p.insert_uniform(&format!("enc{l}.ff1.w"), d, f, uniform_bound(d), &mut rng);
            p.insert_uniform(&format!("enc{l}.ff1.b"), 1, f, uniform_bound(d), &mut rng);
            p.insert_uniform(&format!("enc{l}.ff2.w"), f, d, uniform_bound(f), &mut rng);
            p.insert_uniform(&format!("enc{l}.ff2.b"), 1, d, uniform_bound(f), &mut rng);
        }
        p.insert_uniform("dec.w_ctx", 3 * d, d, uniform_bound(3 * d), &mut rng);
        for w in ["wk", "wv", "wo", "wl"] {
            p.insert_uniform(&format!("dec.{w}"), d, d, uniform_bound(d), &mut rng);
        }
        Ok(Self { config, params: p, decode_mode: DecodeMode::Greedy, baselines: BTreeMap::new() })
    }

    fn head_dim(&self) -> usize {
        self.config.embed_dim / self.config.heads
    }

    fn attention(&self, tape: &mut Tape, q: Var, k: Var, v: Var, mask: Option<&[bool]>) -> Result<Var> {
        let dk = self.head_dim();
        let scale = 1.0 / (dk as f64).sqrt();
        let mut heads = Vec::with_capacity(self.config.heads);
        for hd in 0..self.config.heads {
            let qh = tape.slice_cols(q, hd * dk, dk)?;
            let kh = tape.slice_cols(k, hd * dk, dk)?;
            let vh = tape.slice_cols(v, hd * dk, dk)?;
            let s = tape.matmul_bt(qh, kh)?;
            let s = tape.scale(s, scale);
            let a = tape.softmax(s, mask.map(<[bool]>::to_vec))?;
            heads.push(tape.matmul(a, vh)?);
        }
        tape.concat_cols(&heads)
    }

    fn encode(&self, tape: &mut Tape, b: &Bound, instance: &Instance) -> Result<Encoded> {
        let coords = tape.constant(crate::autodiff::Matrix::from_vec(
            instance.n(),
            2,
            instance.points().iter().flat_map(|p| p.iter().copied()).collect(),
        ));
        let h = tape.matmul(coords, b.get("embed.w"))?;
        let h = tape.add_row(h, b.get("embed.b"))?;
        let mut h = center_nodes(tape, h)?;
        for l in 0..self.config.blocks {
            let q = tape.matmul(h, b.get(&format!("enc{l}.wq")))?;
            let k = tape.matmul(h, b.get(&format!("enc{l}.wk")))?;
            let v = tape.matmul(h, b.get(&format!("enc{l}.wv")))?;
            let att = self.attention(tape, q, k, v, None)?;
            let att = tape.matmul(att, b.get(&format!("enc{l}.wo")))?;
            h = tape.add(h, att)?;
            h = center_nodes(tape, h)?;
            let f = tape.matmul(h, b.get(&format!("enc{l}.ff1.w")))?;
            let f = tape.add_row(f, b.get(&format!("enc{l}.ff1.b")))?;
            let f = tape.tanh(f);
            let f = tape.matmul(f, b.get(&format!("enc{l}.ff2.w")))?;
            let f = tape.add_row(f, b.get(&format!("enc{l}.ff2.b")))?;
            h = tape.add(h, f)?;
            h = center_nodes(tape, h)?;
        }
        let graph = tape.mean_rows(h);
        let gk = tape.matmul(h, b.get("dec.wk"))?;
        let gv = tape.matmul(h, b.get("dec.wv"))?;
        let dk = self.head_dim();
        let mut glimpse_k = Vec::new();
        let mut glimpse_v = Vec::new();
        for hd in 0..self.config.heads {
            glimpse_k.push(tape.slice_cols(gk, hd * dk, dk)?);
            glimpse_v.push(tape.slice_cols(gv, hd * dk, dk)?);
        }
        let logit_k = tape.matmul(h, b.get("dec.wl"))?;
        Ok(Encoded { h, graph, glimpse_k, glimpse_v, logit_k })
    }

    /// Masked next-city log-probabilities (`1 x n`) given the first and last city.
    fn step(&self, tape: &mut Tape, b: &Bound, enc: &Encoded, first: usize, last: usize, mask: &[bool]) -> Result<Var> {
        let hf = tape.slice_rows(enc.h, first, 1)?;
        let hl = tape.slice_rows(enc.h, last, 1)?;
        let ctx = tape.concat_cols(&[enc.graph, hf, hl])?;
        let q = tape.matmul(ctx, b.get("dec.w_ctx"))?;
        let dk = self.head_dim();
        let scale = 1.0 / (dk as f64).sqrt();
        let mut heads = Vec::with_capacity(self.config.heads);
        for hd in 0..self.config.heads {
            let qh = tape.slice_cols(q, hd * dk, dk)?;
            let s = tape.matmul_bt(qh, enc.glimpse_k[hd])?;
            let s = tape.scale(s, scale);
            let a = tape.softmax(s, Some(mask.to_vec()))?;
            heads.push(tape.matmul(a, enc.glimpse_v[hd])?);
        }
        let g = tape.concat_cols(&heads)?;
        let g = tape.matmul(g, b.get("dec.wo"))?;
        let u = tape.matmul_bt(g, enc.logit_k)?;
        let u = tape.scale(u, 1.0 / (self.config.embed_dim as f64).sqrt());
        let u = tape.tanh(u);
        let u = tape.scale(u, self.config.logit_clip);
        if !tape.value(u).is_finite() {
            return Err(Error::NonFiniteLogits);
        }
        tape.log_softmax(u, Some(mask.to_vec()))
    }

    /// Runs the policy on `instance`, recording every differentiable step on `tape`.
    pub fn run(&self, tape: &mut Tape, b: &Bound, instance: &Instance, mut choice: Choice<'_>) -> Result<DecodeTrace> {
        let n = instance.n();
        if let Choice::Forced(order) = &choice {
            crate::cop::tour_length(instance, order)?;
        }
        let first = match &mut choice {
            Choice::Greedy => 0,
            Choice::Sample(rng) => rng.random_range(0..n),
            Choice::Forced(order) => order[0],
        };
        let mut order = vec![first];
        let mut mask = vec![true; n];
        mask[first] = false;
        let start_lp = -(n as f64).ln();
        let mut step_log_probs = vec![start_lp];
        let mut step_probs = vec![vec![1.0 / n as f64; n]];
        let mut chosen: Vec<Var> = Vec::new();
        let enc = if n > 2 { Some(self.encode(tape, b, instance)?) } else { None };

        for t in 1..n {
            let remaining: Vec<usize> = (0..n).filter(|&j| mask[j]).collect();
            if remaining.len() == 1 {
                let j = remaining[0];
                if let Choice::Forced(o) = &choice {
                    debug_assert_eq!(o[t], j);
                }
                let mut probs = vec![0.0; n];
                probs[j] = 1.0;
                step_probs.push(probs);
                step_log_probs.push(0.0);
                order.push(j);
                mask[j] = false;
                continue;
            }
            let enc = enc.as_ref().expect("encoded for n > 2");
            let last = *order.last().expect("non-empty");
            let lp = self.step(tape, b, enc, first, last, &mask)?;
            let row = tape.value(lp).data.clone();
            let next = match &mut choice {
                Choice::Greedy => remaining
                    .iter()
                    .copied()
                    .max_by(|&a, &c| row[a].total_cmp(&row[c]).then(c.cmp(&a)))
                    .expect("remaining"),
                Choice::Sample(rng) => {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut pick = *remaining.last().expect("remaining");
                    for &j in &remaining {
                        acc += row[j].exp();
                        if u < acc {
                            pick = j;
                            break;
                        }
                    }
                    pick
                }
                Choice::Forced(o) => o[t],
            };
            step_probs.push(row.iter().map(|v| v.exp()).collect());
            step_log_probs.push(row[next]);
            chosen.push(tape.element(lp, 0, next)?);
            order.push(next);
            mask[next] = false;
        }
        let log_prob_var = if chosen.is_empty() {
            None
        } else {
            let all = tape.concat_cols(&chosen)?;
            Some(tape.sum(all))
        };
        Ok(DecodeTrace { order, log_prob: step_log_probs.iter().sum(), step_log_probs, step_probs, log_prob_var })
    }

    pub fn decode_trace(&self, instance: &Instance, mode: DecodeMode, seed: u64) -> Result<DecodeTrace> {
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape);
        match mode {
            DecodeMode::Greedy => self.run(&mut tape, &b, instance, Choice::Greedy),
            DecodeMode::Sample => {
                let mut rng = seed::rng(seed);
                self.run(&mut tape, &b, instance, Choice::Sample(&mut rng))
            }
        }
    }

    /// A feasible tour and its exact log-likelihood under the policy.
    pub fn decode(&self, instance: &Instance, mode: DecodeMode, seed: u64) -> Result<(Tour, f64)> {
        let trace = self.decode_trace(instance, mode, seed)?;
        let tour = Tour::from_order(instance, trace.order)?;
        Ok((tour, trace.log_prob))
    }

    /// Next-city distribution after the partial tour `prefix` (at least one city).
    pub fn next_city_probs(&self, instance: &Instance, prefix: &[usize]) -> Result<Vec<f64>> {
        let n = instance.n();
        let mut mask = vec![true; n];
        for &c in prefix {
            mask[c] = false;
        }
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape);
        let enc = self.encode(&mut tape, &b, instance)?;
        let lp = self.step(&mut tape, &b, &enc, prefix[0], *prefix.last().expect("prefix"), &mask)?;
        Ok(tape.value(lp).data.iter().map(|v| v.exp()).collect())
    }

    pub fn to_checkpoint(&self, metadata: Value) -> Value {
        let header = json!({
            "embed_dim": self.config.embed_dim,
            "heads": self.config.heads,
            "blocks": self.config.blocks,
            "ff_hidden": self.config.ff_hidden,
            "logit_clip": self.config.logit_clip,
            "decode_mode": self.decode_mode,
            "baselines": self.baselines.iter().map(|(k, v)| (k.to_string(), json!(v))).collect::<serde_json::Map<_, _>>(),
        });
        checkpoint_json(&self.params, header, metadata)
    }

    pub fn from_checkpoint(doc: &Value) -> Result<Self> {
        let (params, header, _) = parse_checkpoint(doc)?;
        let get = |k: &str| {
            header.get(k).and_then(Value::as_u64).map(|v| v as usize).ok_or_else(|| Error::Checkpoint(format!("policy header lacks `{k}`")))
        };
        let config = PolicyConfig {
            embed_dim: get("embed_dim")?,
            heads: get("heads")?,
            blocks: get("blocks")?,
            ff_hidden: get("ff_hidden")?,
            logit_clip: header.get("logit_clip").and_then(Value::as_f64).unwrap_or(10.0),
        };
        config.validate()?;
        let expected = Self::new(config, 0)?;
        for p in expected.params.params() {
            match params.get(&p.name) {
                Some(m) if m.shape() == p.value.shape() => {}
                _ => return Err(Error::Checkpoint(format!("architecture mismatch at parameter `{}`", p.name))),
            }
        }
        if params.params().len() != expected.params.params().len() {
            return Err(Error::Checkpoint("architecture mismatch: unexpected parameters".into()));
        }
        let decode_mode = header
            .get("decode_mode")
            .map(|v| serde_json::from_value(v.clone()))
            .transpose()?
            .unwrap_or(DecodeMode::Greedy);
        let mut baselines = BTreeMap::new();
        if let Some(obj) = header.get("baselines").and_then(Value::as_object) {
            for (k, v) in obj {
                let scale = k.parse().map_err(|_| Error::Checkpoint(format!("bad baseline key `{k}`")))?;
                baselines.insert(scale, v.as_f64().ok_or_else(|| Error::Checkpoint("bad baseline value".into()))?);
            }
        }
        Ok(Self { config, params, decode_mode, baselines })
    }
}

impl TourSolver for SolverPolicy {
    fn name(&self) -> String {
        "policy".into()
    }

    fn solve(&self, instance: &Instance, seed: u64) -> Result<Tour> {
        Ok(self.decode(instance, self.decode_mode, seed)?.0)
    }
}
