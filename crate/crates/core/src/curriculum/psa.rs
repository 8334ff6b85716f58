use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::selection::{task_selection, CostHistory};
use super::staircase::Staircase;
use crate::cop::{draw_index, EvalSet, InstanceDistribution, Oracle, TourSolver};
use crate::error::{Error, Result};
use crate::seed;
use crate::solver::{reinforce_step, DecodeMode, SolverPolicy, SolverTrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsaConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    /// Instances per scale behind each cost vector.
    pub eval_samples: usize,
}

impl Default for PsaConfig {
    fn default() -> Self {
        Self { epochs: 5, steps_per_epoch: 10, eval_samples: 32 }
    }
}

/// Which scales the staircase evaluation covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalScope {
    /// The scales already on the ladder.
    #[default]
    Trained,
    /// The ladder continuation up to `n_max` that has not been trained yet
    /// (falls back to the trained scales once none remain).
    Untrained,
}

/// Ladder, per-scale mixed distributions and the statistics that drive
/// scale selection.
#[derive(Debug, Clone)]
pub struct CurriculumState {
    pub staircase: Staircase,
    /// Mixed distribution found by exploration at each ladder scale.
    pub mixed_dists: Vec<InstanceDistribution>,
    /// Fixed draws from each mixed distribution, used for cost vectors.
    pub psa_sets: Vec<EvalSet>,
    pub cost_history: CostHistory,
    pub lambda: f64,
    pub eval_scope: EvalScope,
    /// Frozen target datasets, keyed by scale.
    pub target_sets: BTreeMap<usize, EvalSet>,
    pub oracle: Oracle,
    pub seed: u64,
}

impl CurriculumState {
    pub fn new(staircase: Staircase, lambda: f64, window: usize, oracle: Oracle, seed: u64) -> Self {
        Self {
            staircase,
            mixed_dists: Vec::new(),
            psa_sets: Vec::new(),
            cost_history: CostHistory::new(window),
            lambda,
            eval_scope: EvalScope::Trained,
            target_sets: BTreeMap::new(),
            oracle,
            seed,
        }
    }

    pub fn scales(&self) -> &[usize] {
        self.staircase.scales()
    }

    /// Registers the mixed distribution of the newest ladder scale.
    pub fn push_mixed(&mut self, dist: InstanceDistribution, eval_samples: usize) -> Result<()> {
        let k = self.mixed_dists.len();
        let n = *self
            .scales()
            .get(k)
            .ok_or_else(|| Error::TaskSelection(format!("no ladder scale for mixed distribution #{k}")))?;
        if dist.scale != n {
            return Err(Error::InvalidDistribution(format!("distribution of scale {} for ladder scale {n}", dist.scale)));
        }
        let sample_seed = seed::derive2(self.seed, seed::stream::PSA, n as u64);
        let set = EvalSet::new(dist.sample(eval_samples.max(1), sample_seed)?, &self.oracle)?;
        self.mixed_dists.push(dist);
        self.psa_sets.push(set);
        Ok(())
    }

    /// Scales the staircase evaluation averages over.
    pub fn eval_scales(&self) -> Vec<usize> {
        match self.eval_scope {
            EvalScope::Trained => self.scales().to_vec(),
            EvalScope::Untrained => {
                let s = self.staircase.untrained_scales();
                if s.is_empty() {
                    self.scales().to_vec()
                } else {
                    s
                }
            }
        }
    }
}

pub(crate) fn greedy(policy: &SolverPolicy) -> SolverPolicy {
    let mut p = policy.clone();
    p.decode_mode = DecodeMode::Greedy;
    p
}

/// Mean greedy gap of `solver` on each set.
pub fn cost_vector(solver: &SolverPolicy, sets: &[EvalSet], seed: u64) -> Result<Vec<f64>> {
    let g = greedy(solver);
    sets.iter().map(|s| s.evaluate(&g, seed).map(|e| e.mean)).collect()
}

/// Mean gap in percent over the scales of the evaluation scope.
pub fn evaluate_target(solver: &dyn TourSolver, state: &CurriculumState, seed: u64) -> Result<f64> {
    let scales = state.eval_scales();
    let mut total = 0.0;
    for &n in &scales {
        let set = state.target_sets.get(&n).ok_or(Error::MissingEvalSet(n))?;
        total += set.evaluate(solver, seed)?.mean;
    }
    Ok(100.0 * total / scales.len() as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PsaReport {
    /// Cost vector measured at the start of each epoch.
    pub costs: Vec<Vec<f64>>,
    /// Selection distribution used for each epoch.
    pub selections: Vec<Vec<f64>>,
    /// Ladder index drawn for every minibatch.
    pub draws: Vec<usize>,
    pub gradient_steps: usize,
}

/// Scale adaption over the current ladder.
///
/// Each epoch measures the cost vector on the fixed mixed-distribution draws,
/// updates the history window, derives the selection distribution and then
/// trains on minibatches whose scale is drawn from it.
pub fn run_psa(
    solver: &SolverPolicy,
    state: &mut CurriculumState,
    cfg: &PsaConfig,
    train: &SolverTrainConfig,
    seed: u64,
) -> Result<(SolverPolicy, PsaReport)> {
    let k = state.scales().len();
    if state.mixed_dists.len() != k {
        return Err(Error::TaskSelection(format!(
            "{} mixed distributions for {k} ladder scales",
            state.mixed_dists.len()
        )));
    }
    let mut current = solver.clone();
    let mut report = PsaReport::default();
    let mut pick = seed::rng(seed::derive(seed, seed::stream::SAMPLE));
    for epoch in 0..cfg.epochs {
        let costs = cost_vector(&current, &state.psa_sets, seed::derive2(seed, seed::stream::EVAL, epoch as u64))?;
        state.cost_history.push(costs.clone());
        let p = task_selection(&state.cost_history.to_vec(), state.lambda)?;
        for s in 0..cfg.steps_per_epoch {
            let step = (epoch * cfg.steps_per_epoch + s) as u64;
            let idx = draw_index(&p, &mut pick);
            report.draws.push(idx);
            let batch = state.mixed_dists[idx].sample(train.batch, seed::derive2(seed, seed::stream::TRAIN, step))?;
            let mut next = current.clone();
            reinforce_step(&mut next, &batch, train, seed::derive2(seed, seed::stream::DECODE, step))
                .map_err(|e| Error::TrainingAborted { epoch, source: Box::new(e) })?;
            current = next;
            report.gradient_steps += 1;
        }
        report.costs.push(costs);
        report.selections.push(p);
    }
    Ok((current, report))
}
