use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::policy::{Choice, DecodeMode, SolverPolicy};
use crate::autodiff::{GradSet, Tape};
use crate::cop::{check_simplex, draw_index, Instance, InstanceDistribution, Oracle};
use crate::error::{Error, Result};
use crate::seed;

/// Which per-tour signal multiplies the score function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverObjective {
    /// Tour cost itself; no oracle calls during training.
    RawCost,
    /// Tour cost divided by the oracle cost of the same instance.
    OracleNormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverTrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub baseline_decay: f64,
    /// Held-out instances used to record the per-epoch loss (0 disables it).
    pub eval_batch: usize,
    /// Global gradient-norm clip (0 disables it).
    pub grad_clip: f64,
    pub objective: SolverObjective,
    pub exact_limit: usize,
}

impl Default for SolverTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            steps_per_epoch: 10,
            batch: 32,
            learning_rate: 1e-3,
            baseline_decay: 0.9,
            eval_batch: 16,
            grad_clip: 1.0,
            objective: SolverObjective::RawCost,
            exact_limit: crate::cop::DEFAULT_EXACT_LIMIT,
        }
    }
}

impl SolverTrainConfig {
    pub fn total_steps(&self) -> usize {
        self.epochs * self.steps_per_epoch
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverTrainReport {
    /// Mean greedy tour cost on the held-out batch after each epoch.
    pub epoch_losses: Vec<f64>,
    pub gradient_steps: usize,
    /// Set when training stopped early on a non-finite gradient; the returned
    /// policy is then the last finite state.
    pub aborted: Option<String>,
}

/// A sampled tour with its training signal.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub instance: Instance,
    pub order: Vec<usize>,
    pub signal: f64,
}

const CHUNK: usize = 8;

/// `(sum_i s_i * grad log p_i, sum_i grad log p_i)` over a batch, either by
/// sampling tours (`orders == None`) or along given tours.
fn score_sums(
    policy: &SolverPolicy,
    instances: &[Instance],
    orders: Option<&[Vec<usize>]>,
    signal: &(dyn Fn(usize, &Instance, &[usize]) -> Result<f64> + Sync),
    seed: u64,
) -> Result<(GradSet, GradSet, Vec<f64>, Vec<Vec<usize>>)> {
    let idx: Vec<usize> = (0..instances.len()).collect();
    let parts: Vec<(GradSet, GradSet, Vec<f64>, Vec<Vec<usize>>)> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut weighted = policy.params.zero_grads();
            let mut plain = policy.params.zero_grads();
            let mut signals = Vec::new();
            let mut tours = Vec::new();
            for &i in chunk {
                let mut tape = Tape::new();
                let b = policy.params.bind(&mut tape);
                let trace = match orders {
                    Some(o) => policy.run(&mut tape, &b, &instances[i], Choice::Forced(&o[i]))?,
                    None => {
                        let mut rng = seed::rng(seed::derive(seed, i as u64));
                        policy.run(&mut tape, &b, &instances[i], Choice::Sample(&mut rng))?
                    }
                };
                let s = signal(i, &instances[i], &trace.order)?;
                if let Some(lp) = trace.log_prob_var {
                    let g = tape.backward(lp)?;
                    weighted.add_from(&b, &g, s);
                    plain.add_from(&b, &g, 1.0);
                }
                signals.push(s);
                tours.push(trace.order);
            }
            Ok((weighted, plain, signals, tours))
        })
        .collect::<Result<_>>()?;
    let mut weighted = policy.params.zero_grads();
    let mut plain = policy.params.zero_grads();
    let mut signals = Vec::with_capacity(instances.len());
    let mut tours = Vec::with_capacity(instances.len());
    for (w, p, s, t) in parts {
        weighted.add_scaled(&w, 1.0);
        plain.add_scaled(&p, 1.0);
        signals.extend(s);
        tours.extend(t);
    }
    Ok((weighted, plain, signals, tours))
}

/// REINFORCE gradient `(1/B) sum_i (s_i - baseline) grad log p(tour_i)` along fixed rollouts.
pub fn reinforce_gradient(policy: &SolverPolicy, rollouts: &[Rollout], baseline: f64) -> Result<GradSet> {
    let instances: Vec<Instance> = rollouts.iter().map(|r| r.instance.clone()).collect();
    let orders: Vec<Vec<usize>> = rollouts.iter().map(|r| r.order.clone()).collect();
    let signals: Vec<f64> = rollouts.iter().map(|r| r.signal).collect();
    let lookup = |i: usize, _: &Instance, _: &[usize]| -> Result<f64> { Ok(signals[i]) };
    let (mut w, p, _, _) = score_sums(policy, &instances, Some(&orders), &lookup, 0)?;
    w.add_scaled(&p, -baseline);
    w.scale(1.0 / rollouts.len() as f64);
    Ok(w)
}

/// The surrogate whose gradient [`reinforce_gradient`] returns:
/// `(1/B) sum_i (s_i - baseline) log p(tour_i)`.
pub fn reinforce_surrogate(policy: &SolverPolicy, rollouts: &[Rollout], baseline: f64) -> Result<f64> {
    let mut total = 0.0;
    for r in rollouts {
        let mut tape = Tape::new();
        let b = policy.params.bind(&mut tape);
        let trace = policy.run(&mut tape, &b, &r.instance, Choice::Forced(&r.order))?;
        let lp = trace.log_prob_var.map_or(0.0, |v| tape.scalar(v));
        total += (r.signal - baseline) * lp;
    }
    Ok(total / rollouts.len() as f64)
}

fn mean_greedy_cost(policy: &SolverPolicy, instances: &[Instance]) -> Result<f64> {
    let costs: Vec<f64> = instances
        .par_iter()
        .map(|inst| policy.decode(inst, DecodeMode::Greedy, 0).map(|(t, _)| t.length))
        .collect::<Result<_>>()?;
    Ok(costs.iter().sum::<f64>() / costs.len().max(1) as f64)
}

/// One optimisation step of the policy on `instances`, updating the per-scale baseline.
pub fn reinforce_step(
    policy: &mut SolverPolicy,
    instances: &[Instance],
    cfg: &SolverTrainConfig,
    seed: u64,
) -> Result<()> {
    let oracle = Oracle::with_limit(cfg.exact_limit);
    let objective = cfg.objective;
    let signal = move |_: usize, inst: &Instance, order: &[usize]| -> Result<f64> {
        let cost = crate::cop::tour_length(inst, order)?;
        match objective {
            SolverObjective::RawCost => Ok(cost),
            SolverObjective::OracleNormalized => Ok(cost / oracle.solve(inst)?.0.length),
        }
    };
    let (mut grad, plain, signals, _) = score_sums(policy, instances, None, &signal, seed)?;
    let batch_mean = signals.iter().sum::<f64>() / signals.len() as f64;
    let scale = instances[0].n();
    let baseline = *policy.baselines.get(&scale).unwrap_or(&batch_mean);
    policy
        .baselines
        .insert(scale, cfg.baseline_decay * baseline + (1.0 - cfg.baseline_decay) * batch_mean);
    grad.add_scaled(&plain, -baseline);
    grad.scale(1.0 / instances.len() as f64);
    if cfg.grad_clip > 0.0 {
        grad.clip_norm(cfg.grad_clip);
    }
    policy.params.apply_update(&grad, cfg.learning_rate)
}

/// Best response of the solver player to a mixture over distributions.
///
/// Each minibatch draws one distribution index from `strategy`, then `batch`
/// instances from it. The input policy is left untouched.
pub fn train_solver_oracle(
    policy: &SolverPolicy,
    strategy: &[f64],
    dists: &[InstanceDistribution],
    cfg: &SolverTrainConfig,
    seed: u64,
) -> Result<(SolverPolicy, SolverTrainReport)> {
    check_simplex(strategy)?;
    if strategy.len() != dists.len() {
        return Err(Error::InvalidStrategy(format!(
            "{} weights for {} distributions",
            strategy.len(),
            dists.len()
        )));
    }
    let mut current = policy.clone();
    let mut report = SolverTrainReport::default();
    if cfg.epochs == 0 || cfg.steps_per_epoch == 0 {
        return Ok((current, report));
    }
    let held_out = if cfg.eval_batch > 0 {
        let mix = InstanceDistribution::mixture(strategy.to_vec(), dists.to_vec())?;
        mix.sample(cfg.eval_batch, seed::derive(seed, seed::stream::EVAL))?
    } else {
        Vec::new()
    };
    let mut pick_rng = seed::rng(seed::derive(seed, seed::stream::SAMPLE));
    for epoch in 0..cfg.epochs {
        for s in 0..cfg.steps_per_epoch {
            let step = (epoch * cfg.steps_per_epoch + s) as u64;
            let k = draw_index(strategy, &mut pick_rng);
            let batch = dists[k].sample(cfg.batch, seed::derive2(seed, seed::stream::TRAIN, step))?;
            let mut next = current.clone();
            match reinforce_step(&mut next, &batch, cfg, seed::derive2(seed, seed::stream::DECODE, step)) {
                Ok(()) => current = next,
                Err(e @ Error::NonFiniteGradient(_)) | Err(e @ Error::NonFiniteLogits) => {
                    report.aborted = Some(format!("epoch {epoch}: {e}"));
                    return Ok((current, report));
                }
                Err(e) => return Err(Error::TrainingAborted { epoch, source: Box::new(e) }),
            }
            report.gradient_steps += 1;
        }
        if !held_out.is_empty() {
            report.epoch_losses.push(mean_greedy_cost(&current, &held_out)?);
        }
    }
    Ok((current, report))
}
