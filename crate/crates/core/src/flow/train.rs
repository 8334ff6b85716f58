use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::FlowDistribution;
use crate::autodiff::{GradSet, Matrix, Tape};
use crate::cop::{check_simplex, exact_oracle, proxy_oracle, Instance, TourSolver};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    GapExact,
    GapProxy,
    /// Tour cost with no oracle call. Favors spread-out instances.
    RawCost,
}

impl RewardMode {
    /// `GapExact` when the exact oracle can handle `n`, `GapProxy` otherwise.
    pub fn default_for(n: usize, exact_limit: usize) -> Self {
        if n <= exact_limit {
            Self::GapExact
        } else {
            Self::GapProxy
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorTrainConfig {
    /// One gradient step per epoch.
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    /// `None` picks [`RewardMode::default_for`].
    pub reward_mode: Option<RewardMode>,
    pub exact_limit: usize,
    /// Global gradient-norm clip (0 disables it).
    pub grad_clip: f64,
}

impl Default for GeneratorTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch: 32,
            learning_rate: 1e-3,
            reward_mode: None,
            exact_limit: crate::cop::DEFAULT_EXACT_LIMIT,
            grad_clip: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorTrainReport {
    /// Mean reward of each epoch's batch, measured before that epoch's update.
    pub epoch_rewards: Vec<f64>,
    pub gradient_steps: usize,
    pub aborted: Option<String>,
}

/// Reward of one instance: the strategy-weighted gap (or cost) of the solvers.
///
/// An instance whose nodes all coincide has gap 0 for every solver.
pub fn instance_reward(
    instance: &Instance,
    solvers: &[&dyn TourSolver],
    strategy: &[f64],
    mode: RewardMode,
    exact_limit: usize,
    seed: u64,
) -> Result<f64> {
    let reference = match mode {
        RewardMode::GapExact => Some(exact_oracle(instance, exact_limit)?.length),
        RewardMode::GapProxy => Some(proxy_oracle(instance, seed::derive(seed, seed::stream::PROXY))?.length),
        RewardMode::RawCost => None,
    };
    let mut total = 0.0;
    for (j, (solver, &w)) in solvers.iter().zip(strategy).enumerate() {
        if w == 0.0 {
            continue;
        }
        let cost = solver.solve(instance, seed::derive(seed, j as u64))?.length;
        total += w
            * match reference {
                Some(r) => crate::cop::instance_gap(cost, r)?,
                None => cost,
            };
    }
    Ok(total)
}

/// Gradient of `sum_i (r_i - mean r) / B * log P(I_i)` with instances and rewards frozen.
pub fn score_gradient(flow: &FlowDistribution, instances: &[Instance], rewards: &[f64]) -> Result<GradSet> {
    let mut tape = Tape::new();
    let bound = flow.params().bind(&mut tape);
    let out = score_surrogate_tape(flow, &mut tape, &bound, instances, rewards)?;
    let g = tape.backward(out)?;
    Ok(flow.params().grads_from(&bound, &g))
}

/// Value of the surrogate whose gradient is [`score_gradient`].
pub fn score_surrogate(flow: &FlowDistribution, instances: &[Instance], rewards: &[f64]) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = flow.params().bind(&mut tape);
    let out = score_surrogate_tape(flow, &mut tape, &bound, instances, rewards)?;
    Ok(tape.scalar(out))
}

fn score_surrogate_tape(
    flow: &FlowDistribution,
    tape: &mut Tape,
    bound: &crate::autodiff::Bound,
    instances: &[Instance],
    rewards: &[f64],
) -> Result<crate::autodiff::Var> {
    if instances.is_empty() || instances.len() != rewards.len() {
        return Err(Error::InvalidStrategy(format!(
            "{} rewards for {} instances",
            rewards.len(),
            instances.len()
        )));
    }
    let b = instances.len() as f64;
    let mean = rewards.iter().sum::<f64>() / b;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (inst, r) in instances.iter().zip(rewards) {
        points.extend_from_slice(inst.points());
        weights.extend(std::iter::repeat_n((r - mean) / b, inst.n()));
    }
    let ld = flow.log_density_tape(tape, bound, &points)?;
    let w = tape.constant(Matrix::from_vec(weights.len(), 1, weights));
    let weighted = tape.mul(ld, w)?;
    Ok(tape.sum(weighted))
}

/// Adversarial best response of the generator to a mixture of solvers.
///
/// Each epoch samples `batch` instances of size `scale`, scores them with
/// [`instance_reward`] and ascends the centred score-function estimate.
/// The input flow is left untouched.
pub fn train_generator_oracle(
    flow: &FlowDistribution,
    solvers: &[&dyn TourSolver],
    strategy: &[f64],
    scale: usize,
    cfg: &GeneratorTrainConfig,
    seed: u64,
) -> Result<(FlowDistribution, GeneratorTrainReport)> {
    check_simplex(strategy)?;
    if strategy.len() != solvers.len() {
        return Err(Error::InvalidStrategy(format!("{} weights for {} solvers", strategy.len(), solvers.len())));
    }
    let mode = cfg.reward_mode.unwrap_or_else(|| RewardMode::default_for(scale, cfg.exact_limit));
    if mode == RewardMode::GapExact && scale > cfg.exact_limit {
        return Err(Error::ExactOracleCapacity { n: scale, limit: cfg.exact_limit });
    }
    let mut current = flow.clone();
    let mut report = GeneratorTrainReport::default();
    for epoch in 0..cfg.epochs {
        let batch_seed = seed::derive2(seed, seed::stream::FLOW, epoch as u64);
        let instances = match current.sample(scale, cfg.batch, batch_seed) {
            Ok(v) => v,
            Err(e @ Error::NonFiniteFlow) => {
                report.aborted = Some(format!("epoch {epoch}: {e}"));
                return Ok((current, report));
            }
            Err(e) => return Err(e),
        };
        let reward_seed = seed::derive2(seed, seed::stream::DECODE, epoch as u64);
        let rewards = instances
            .par_iter()
            .enumerate()
            .map(|(i, inst)| {
                instance_reward(inst, solvers, strategy, mode, cfg.exact_limit, seed::derive(reward_seed, i as u64))
            })
            .collect::<Result<Vec<f64>>>()
            .map_err(|e| Error::TrainingAborted { epoch, source: Box::new(e) })?;
        report.epoch_rewards.push(rewards.iter().sum::<f64>() / rewards.len() as f64);
        let mut grads = match score_gradient(&current, &instances, &rewards) {
            Ok(g) => g,
            Err(e) => {
                report.aborted = Some(format!("epoch {epoch}: {e}"));
                return Ok((current, report));
            }
        };
        if !grads.is_finite() {
            report.aborted = Some(format!("epoch {epoch}: non-finite generator gradient"));
            return Ok((current, report));
        }
        if cfg.grad_clip > 0.0 {
            grads.clip_norm(cfg.grad_clip);
        }
        grads.scale(-1.0);
        let mut next = current.clone();
        if let Err(e) = next.params_mut().apply_update(&grads, cfg.learning_rate) {
            report.aborted = Some(format!("epoch {epoch}: {e}"));
            return Ok((current, report));
        }
        current = next;
        report.gradient_steps += 1;
    }
    Ok((current, report))
}
