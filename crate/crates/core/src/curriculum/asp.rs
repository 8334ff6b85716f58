use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::psa::{evaluate_target, greedy, run_psa, CurriculumState, EvalScope, PsaConfig};
use super::selection::{CostHistory, DEFAULT_WINDOW};
use super::staircase::{Decision, Staircase, StaircaseConfig};
use crate::cop::io::{distribution_from_json, distribution_to_json};
use crate::cop::{sample_mixed_gaussian, EvalSet, InstanceDistribution, Oracle};
use crate::error::{Error, Result};
use crate::meta_game::{run_de, DeConfig, MetaGame};
use crate::seed;
use crate::solver::{PolicyConfig, SolverPolicy};

/// Frozen mixed-Gaussian target datasets used for staircase decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub samples: usize,
    pub lambda_max: f64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self { samples: 64, lambda_max: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AspConfig {
    pub staircase: StaircaseConfig,
    pub lambda: f64,
    pub window: usize,
    #[serde(default)]
    pub eval_scope: EvalScope,
    pub target: TargetConfig,
    pub psa: PsaConfig,
    pub de: DeConfig,
    pub policy: PolicyConfig,
    /// Hard bound on loop iterations, counting the initial exploration.
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for AspConfig {
    fn default() -> Self {
        Self {
            staircase: StaircaseConfig {
                n_start: 5,
                n_step: 5,
                n_max: 15,
                alpha: 10.0,
                patience: 5,
                include_top_scale: false,
            },
            lambda: 0.5,
            window: DEFAULT_WINDOW,
            eval_scope: EvalScope::Trained,
            target: TargetConfig::default(),
            psa: PsaConfig::default(),
            de: DeConfig::default(),
            policy: PolicyConfig::default(),
            max_iterations: 50,
            seed: 0,
        }
    }
}

impl AspConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut absorb = |r: Result<()>| {
            if let Err(Error::Config(e)) = r {
                errs.extend(e);
            }
        };
        absorb(self.staircase.validate());
        absorb(self.policy.validate());
        if !(0.0..=1.0).contains(&self.lambda) {
            errs.push(format!("lambda must lie in [0, 1], got {}", self.lambda));
        }
        if self.window == 0 {
            errs.push("window must be at least 1".into());
        }
        if self.target.samples == 0 {
            errs.push("target.samples must be at least 1".into());
        }
        if !(self.target.lambda_max > 0.0) {
            errs.push(format!("target.lambda_max must be positive, got {}", self.target.lambda_max));
        }
        if self.psa.eval_samples == 0 {
            errs.push("psa.eval_samples must be at least 1".into());
        }
        if self.de.psro_epochs == 0 {
            errs.push("de.psro_epochs must be at least 1".into());
        }
        if self.de.eval_samples == 0 {
            errs.push("de.eval_samples must be at least 1".into());
        }
        if self.de.solver_train.batch == 0 || self.de.generator_train.batch == 0 {
            errs.push("training batch sizes must be at least 1".into());
        }
        if self.max_iterations == 0 {
            errs.push("max_iterations must be at least 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Every scale the ladder could ever reach.
    pub fn ladder(&self) -> Vec<usize> {
        let s = &self.staircase;
        let mut out = vec![s.n_start];
        let mut n = s.n_start + s.n_step;
        while n < s.n_max || (s.include_top_scale && n == s.n_max) {
            out.push(n);
            n += s.n_step;
        }
        out
    }

    /// Scales that carry a target dataset.
    pub fn target_scales(&self) -> Vec<usize> {
        let s = &self.staircase;
        (0..).map(|k| s.n_start + k * s.n_step.max(1)).take_while(|&n| n <= s.n_max).collect()
    }

    pub fn oracle(&self) -> Oracle {
        Oracle { exact_limit: self.de.exact_limit, proxy_seed: seed::derive(self.seed, seed::stream::PROXY) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Branch {
    De,
    Psa,
    /// Ladder exhausted.
    Stop,
    /// `max_iterations` reached before the ladder was exhausted.
    Limit,
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub iter: usize,
    pub branch: Branch,
    /// Evaluation result (percent) that led to this branch; absent for the
    /// initial exploration.
    pub r: Option<f64>,
    pub scales: Vec<usize>,
    /// Selection distribution of the last scale-adaption epoch.
    pub p_t: Vec<f64>,
    pub sigma_ss: Vec<f64>,
    pub sigma_dg: Vec<f64>,
    pub exploitability: Option<f64>,
    /// Solver gradient steps taken so far in the whole run.
    pub gradient_steps: usize,
    /// Seconds since the run started.
    pub wallclock: f64,
}

/// Everything needed to continue an interrupted run.
#[derive(Debug, Clone)]
pub struct AspCheckpoint {
    pub iter: usize,
    /// The action decided for `iter` but not completed, with its `r`.
    pub pending: Option<(Decision, Option<f64>)>,
    pub scales: Vec<usize>,
    pub patience_count: usize,
    pub cost_history: CostHistory,
    pub mixed_dists: Vec<InstanceDistribution>,
    pub gradient_steps: usize,
    pub solver: SolverPolicy,
    pub log: Vec<RunRecord>,
}

impl AspCheckpoint {
    pub fn to_json(&self) -> Value {
        json!({
            "iter": self.iter,
            "pending": self.pending,
            "scales": self.scales,
            "patience_count": self.patience_count,
            "cost_history": self.cost_history,
            "mixed_dists": self.mixed_dists.iter().map(distribution_to_json).collect::<Vec<_>>(),
            "gradient_steps": self.gradient_steps,
            "solver": self.solver.to_checkpoint(Value::Null),
            "log": self.log,
        })
    }

    pub fn from_json(doc: &Value) -> Result<Self> {
        let field = |k: &str| doc.get(k).cloned().ok_or_else(|| Error::Checkpoint(format!("resume state lacks `{k}`")));
        Ok(Self {
            iter: serde_json::from_value(field("iter")?)?,
            pending: serde_json::from_value(field("pending")?)?,
            scales: serde_json::from_value(field("scales")?)?,
            patience_count: serde_json::from_value(field("patience_count")?)?,
            cost_history: serde_json::from_value(field("cost_history")?)?,
            mixed_dists: field("mixed_dists")?
                .as_array()
                .ok_or_else(|| Error::Checkpoint("`mixed_dists` is not an array".into()))?
                .iter()
                .map(distribution_from_json)
                .collect::<Result<_>>()?,
            gradient_steps: serde_json::from_value(field("gradient_steps")?)?,
            solver: SolverPolicy::from_checkpoint(&field("solver")?)?,
            log: serde_json::from_value(field("log")?)?,
        })
    }
}

/// Progress notifications from [`run_asp_with`].
pub enum AspEvent<'a> {
    /// A loop iteration finished; `record` has already been appended to the log.
    Iteration { record: &'a RunRecord, solver: &'a SolverPolicy, state: &'a CurriculumState },
    /// Distributional exploration finished during iteration `iter`.
    Exploration { iter: usize, game: &'a MetaGame },
    /// A sub-procedure failed; the run stops after this event.
    Failed { checkpoint: &'a AspCheckpoint, error: &'a Error },
}

#[derive(Debug, Clone)]
pub struct AspOutcome {
    pub solver: SolverPolicy,
    pub state: CurriculumState,
    pub log: Vec<RunRecord>,
    pub gradient_steps: usize,
    /// Evaluation result of the returned solver (the `r` of the last record).
    pub final_r: f64,
}

/// Builds the frozen target datasets for every reachable scale.
pub fn target_sets(cfg: &AspConfig) -> Result<std::collections::BTreeMap<usize, EvalSet>> {
    let oracle = cfg.oracle();
    cfg.target_scales()
        .into_iter()
        .map(|n| {
            let data = sample_mixed_gaussian(
                n,
                cfg.target.samples,
                cfg.target.lambda_max,
                seed::derive2(cfg.seed, seed::stream::TARGET, n as u64),
            )?;
            Ok((n, EvalSet::new(data, &oracle)?))
        })
        .collect()
}

fn eval_seed(cfg: &AspConfig) -> u64 {
    seed::derive(cfg.seed, seed::stream::EVAL)
}

fn fresh_state(cfg: &AspConfig, staircase: Staircase) -> Result<CurriculumState> {
    let mut state = CurriculumState::new(
        staircase,
        cfg.lambda,
        cfg.window,
        cfg.oracle(),
        seed::derive(cfg.seed, seed::stream::PSA),
    );
    state.eval_scope = cfg.eval_scope;
    state.target_sets = target_sets(cfg)?;
    Ok(state)
}

/// Runs the full adaptive-staircase loop with no observer.
pub fn run_asp(cfg: &AspConfig) -> Result<AspOutcome> {
    run_asp_with(cfg, &mut |_| Ok(()))
}

/// Runs the adaptive-staircase loop from scratch.
///
/// Iteration 0 explores at `n_start`. Each later iteration evaluates the
/// current solver on the target datasets, feeds `r` to the staircase and
/// runs the chosen branch.
pub fn run_asp_with(cfg: &AspConfig, observer: &mut dyn FnMut(AspEvent<'_>) -> Result<()>) -> Result<AspOutcome> {
    cfg.validate()?;
    let solver = SolverPolicy::new(cfg.policy, seed::derive(cfg.seed, seed::stream::INIT))?;
    let state = fresh_state(cfg, Staircase::new(cfg.staircase)?)?;
    let pending = Some((Decision::De(cfg.staircase.n_start), None));
    drive(cfg, Run { solver, state, log: Vec::new(), gradient_steps: 0 }, 0, pending, observer)
}

/// Continues a run from the state saved when it failed.
pub fn resume_asp(
    cfg: &AspConfig,
    checkpoint: AspCheckpoint,
    observer: &mut dyn FnMut(AspEvent<'_>) -> Result<()>,
) -> Result<AspOutcome> {
    cfg.validate()?;
    if checkpoint.solver.config != cfg.policy {
        return Err(Error::Checkpoint("resume state was produced with a different policy config".into()));
    }
    let staircase = Staircase::with_state(cfg.staircase, checkpoint.scales.clone(), checkpoint.patience_count)?;
    let mut state = fresh_state(cfg, staircase)?;
    state.cost_history = checkpoint.cost_history;
    for d in checkpoint.mixed_dists {
        state.push_mixed(d, cfg.psa.eval_samples)?;
    }
    let run = Run { solver: checkpoint.solver, state, log: checkpoint.log, gradient_steps: checkpoint.gradient_steps };
    drive(cfg, run, checkpoint.iter, checkpoint.pending, observer)
}

struct Run {
    solver: SolverPolicy,
    state: CurriculumState,
    log: Vec<RunRecord>,
    gradient_steps: usize,
}

impl Run {
    fn checkpoint(&self, iter: usize, pending: (Decision, Option<f64>), history: CostHistory) -> AspCheckpoint {
        AspCheckpoint {
            iter,
            pending: Some(pending),
            scales: self.state.scales().to_vec(),
            patience_count: self.state.staircase.patience_count(),
            cost_history: history,
            mixed_dists: self.state.mixed_dists.clone(),
            gradient_steps: self.gradient_steps,
            solver: self.solver.clone(),
            log: self.log.clone(),
        }
    }
}

fn drive(
    cfg: &AspConfig,
    mut run: Run,
    start_iter: usize,
    mut pending: Option<(Decision, Option<f64>)>,
    observer: &mut dyn FnMut(AspEvent<'_>) -> Result<()>,
) -> Result<AspOutcome> {
    let clock = Instant::now();
    let mut iter = start_iter;
    while iter < cfg.max_iterations {
        let (decision, r) = match pending.take() {
            Some(p) => p,
            None => {
                let r = evaluate_target(&greedy(&run.solver), &run.state, eval_seed(cfg))?;
                (run.state.staircase.decide(r), Some(r))
            }
        };
        let mut record = RunRecord {
            iter,
            branch: Branch::Stop,
            r,
            scales: Vec::new(),
            p_t: Vec::new(),
            sigma_ss: Vec::new(),
            sigma_dg: Vec::new(),
            exploitability: None,
            gradient_steps: 0,
            wallclock: 0.0,
        };
        let history_before = run.state.cost_history.clone();
        let step: Result<()> = match decision {
            Decision::De(n) => {
                record.branch = Branch::De;
                run_de(&run.solver, n, &cfg.de, None, seed::derive2(cfg.seed, seed::stream::DE, iter as u64)).and_then(
                    |out| {
                        observer(AspEvent::Exploration { iter, game: &out.game })?;
                        run.state.push_mixed(out.mixed_dist, cfg.psa.eval_samples)?;
                        record.sigma_ss = out.game.sigma_ss.clone();
                        record.sigma_dg = out.game.sigma_dg.clone();
                        record.exploitability = Some(out.game.exploitability());
                        run.gradient_steps += out.game.solver_gradient_steps;
                        run.solver = out.best_solver;
                        Ok(())
                    },
                )
            }
            Decision::Psa => {
                record.branch = Branch::Psa;
                let train = cfg.de.solver_train;
                let s = seed::derive2(cfg.seed, seed::stream::TRAIN, iter as u64);
                run_psa(&run.solver, &mut run.state, &cfg.psa, &train, s).map(|(solver, report)| {
                    record.p_t = report.selections.last().cloned().unwrap_or_default();
                    run.gradient_steps += report.gradient_steps;
                    run.solver = solver;
                })
            }
            Decision::Stop => Ok(()),
        };
        if let Err(error) = step {
            run.state.cost_history = history_before.clone();
            let cp = run.checkpoint(iter, (decision, r), history_before);
            observer(AspEvent::Failed { checkpoint: &cp, error: &error })?;
            return Err(error);
        }
        record.scales = run.state.scales().to_vec();
        record.gradient_steps = run.gradient_steps;
        record.wallclock = clock.elapsed().as_secs_f64();
        run.log.push(record);
        let record = run.log.last().expect("just pushed");
        observer(AspEvent::Iteration { record, solver: &run.solver, state: &run.state })?;
        iter += 1;
        if decision == Decision::Stop {
            let final_r = r.expect("a stop always follows an evaluation");
            return Ok(AspOutcome { solver: run.solver, state: run.state, log: run.log, gradient_steps: run.gradient_steps, final_r });
        }
    }
    let r = evaluate_target(&greedy(&run.solver), &run.state, eval_seed(cfg))?;
    let record = RunRecord {
        iter,
        branch: Branch::Limit,
        r: Some(r),
        scales: run.state.scales().to_vec(),
        p_t: Vec::new(),
        sigma_ss: Vec::new(),
        sigma_dg: Vec::new(),
        exploitability: None,
        gradient_steps: run.gradient_steps,
        wallclock: clock.elapsed().as_secs_f64(),
    };
    run.log.push(record);
    observer(AspEvent::Iteration { record: run.log.last().expect("just pushed"), solver: &run.solver, state: &run.state })?;
    Ok(AspOutcome { solver: run.solver, state: run.state, log: run.log, gradient_steps: run.gradient_steps, final_r: r })
}

/// Replays the branch decisions recorded in a run log through a fresh
/// controller and reports whether they agree.
pub fn replay_decisions(config: StaircaseConfig, log: &[RunRecord]) -> Result<bool> {
    let mut stairs = Staircase::new(config)?;
    for rec in log {
        let Some(r) = rec.r else {
            if rec.branch != Branch::De || rec.iter != 0 {
                return Ok(false);
            }
            continue;
        };
        if rec.branch == Branch::Limit {
            continue;
        }
        let expected = match stairs.decide(r) {
            Decision::De(_) => Branch::De,
            Decision::Psa => Branch::Psa,
            Decision::Stop => Branch::Stop,
        };
        if expected != rec.branch || stairs.scales() != rec.scales.as_slice() {
            return Ok(false);
        }
    }
    Ok(true)
}
