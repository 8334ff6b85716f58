use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::nash::{exploitability, solve_with, MetaSolver, NashSolution};
use crate::cop::{EvalSet, InstanceDistribution, Oracle, TourSolver};
use crate::error::{Error, Result};
use crate::flow::{train_generator_oracle, FlowConfig, FlowDistribution, GeneratorTrainConfig};
use crate::seed;
use crate::solver::{train_solver_oracle, DecodeMode, SolverPolicy, SolverTrainConfig};

/// Order in which the two oracles respond within one PSRO epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeMode {
    /// Both oracles respond to the previous epoch's meta-strategies.
    #[default]
    Simultaneous,
    /// The generator responds first; the solver then responds to the
    /// equilibrium of the game that already contains the new distribution.
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeConfig {
    pub psro_epochs: usize,
    pub eval_samples: usize,
    pub solver_train: SolverTrainConfig,
    pub generator_train: GeneratorTrainConfig,
    pub flow: FlowConfig,
    #[serde(default)]
    pub mode: DeMode,
    #[serde(default)]
    pub meta_solver: MetaSolver,
    pub exact_limit: usize,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            psro_epochs: 3,
            eval_samples: 64,
            solver_train: SolverTrainConfig::default(),
            generator_train: GeneratorTrainConfig::default(),
            flow: FlowConfig::default(),
            mode: DeMode::Simultaneous,
            meta_solver: MetaSolver::Lp,
            exact_limit: crate::cop::DEFAULT_EXACT_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub sigma_ss: Vec<f64>,
    pub sigma_dg: Vec<f64>,
    pub value: f64,
    pub exploitability: f64,
}

/// Restricted zero-sum game between a solver population and a distribution
/// population at one scale. Entry `utility[i][j]` is the expected gap of
/// solver `i` on distribution `j`.
#[derive(Debug, Clone)]
pub struct MetaGame {
    pub scale: usize,
    pub eval_samples: usize,
    pub eval_seed: u64,
    pub oracle: Oracle,
    pub solvers: Vec<SolverPolicy>,
    pub dists: Vec<InstanceDistribution>,
    /// Generator parameters behind each flow column; `None` for fixed distributions.
    pub flows: Vec<Option<FlowDistribution>>,
    pub utility: Vec<Vec<f64>>,
    pub sigma_ss: Vec<f64>,
    pub sigma_dg: Vec<f64>,
    pub meta_solver: MetaSolver,
    pub history: Vec<EpochRecord>,
    pub warnings: Vec<String>,
    /// Solver gradient steps spent by the oracles of this game.
    pub solver_gradient_steps: usize,
    columns: Vec<EvalSet>,
}

/// Expected gap of `solver` on `dist` from `samples` instances (greedy decoding
/// for neural solvers is the caller's responsibility).
pub fn estimate_utility_cell(
    solver: &dyn TourSolver,
    dist: &InstanceDistribution,
    samples: usize,
    seed: u64,
    oracle: &Oracle,
) -> Result<f64> {
    Ok(crate::cop::expected_gap(solver, dist, samples, seed, oracle)?.mean)
}

fn greedy(mut p: SolverPolicy) -> SolverPolicy {
    p.decode_mode = DecodeMode::Greedy;
    p
}

impl MetaGame {
    /// One-by-one game `{(solver, dist)}`.
    pub fn new(
        solver: SolverPolicy,
        dist: InstanceDistribution,
        eval_samples: usize,
        eval_seed: u64,
        oracle: Oracle,
        meta_solver: MetaSolver,
    ) -> Result<Self> {
        if eval_samples == 0 {
            return Err(Error::InvalidDistribution("utility estimation needs at least one sample".into()));
        }
        let mut game = Self {
            scale: dist.scale,
            eval_samples,
            eval_seed,
            oracle,
            solvers: Vec::new(),
            dists: Vec::new(),
            flows: Vec::new(),
            utility: Vec::new(),
            sigma_ss: Vec::new(),
            sigma_dg: Vec::new(),
            meta_solver,
            history: Vec::new(),
            warnings: Vec::new(),
            solver_gradient_steps: 0,
            columns: Vec::new(),
        };
        game.solvers.push(greedy(solver));
        game.utility.push(Vec::new());
        game.add_dist(dist, None)?;
        game.resolve()?;
        Ok(game)
    }

    /// Seed of column `j`; every solver is scored on the same instances.
    pub fn column_seed(&self, j: usize) -> u64 {
        seed::derive2(self.eval_seed, seed::stream::CELL, j as u64)
    }

    fn cell(&self, i: usize, j: usize) -> Result<f64> {
        let seed = seed::derive(self.column_seed(j), seed::stream::DECODE);
        self.columns[j]
            .evaluate(&self.solvers[i], seed)
            .map(|e| e.mean)
            .map_err(|e| Error::Cell { row: i, col: j, source: Box::new(e) })
    }

    /// Appends a distribution column and estimates it against every current solver.
    pub fn add_dist(&mut self, dist: InstanceDistribution, flow: Option<FlowDistribution>) -> Result<()> {
        let j = self.dists.len();
        let seed = self.column_seed(j);
        let instances =
            dist.sample(self.eval_samples, seed).map_err(|e| Error::Cell { row: 0, col: j, source: Box::new(e) })?;
        let set = EvalSet::new(instances, &self.oracle).map_err(|e| Error::Cell { row: 0, col: j, source: Box::new(e) })?;
        self.columns.push(set);
        self.dists.push(dist);
        self.flows.push(flow);
        for i in 0..self.solvers.len() {
            let v = self.cell(i, j)?;
            self.utility[i].push(v);
        }
        Ok(())
    }

    /// Appends a solver row and estimates it against every current distribution.
    pub fn add_solver(&mut self, solver: SolverPolicy) -> Result<()> {
        self.solvers.push(greedy(solver));
        let i = self.solvers.len() - 1;
        let row = (0..self.dists.len()).map(|j| self.cell(i, j)).collect::<Result<Vec<_>>>()?;
        self.utility.push(row);
        Ok(())
    }

    /// Recomputes the meta-strategies from the current utility matrix.
    pub fn resolve(&mut self) -> Result<NashSolution> {
        let sol = solve_with(&self.utility, self.meta_solver)?;
        self.sigma_ss = sol.sigma_ss.clone();
        self.sigma_dg = sol.sigma_dg.clone();
        Ok(sol)
    }

    pub fn exploitability(&self) -> f64 {
        exploitability(&self.utility, &self.sigma_ss, &self.sigma_dg)
    }

    /// Payoff of the solver player in cell `(i, j)`.
    pub fn payoff_ss(&self, i: usize, j: usize) -> f64 {
        -self.utility[i][j]
    }

    /// Payoff of the generator player in cell `(i, j)`.
    pub fn payoff_dg(&self, i: usize, j: usize) -> f64 {
        self.utility[i][j]
    }

    /// `sigma_dg`-weighted expected gap of each solver.
    pub fn weighted_gaps(&self) -> Vec<f64> {
        self.utility.iter().map(|row| row.iter().zip(&self.sigma_dg).map(|(g, q)| g * q).sum()).collect()
    }

    /// Index of the solver with the lowest weighted gap; ties go to the latest.
    pub fn best_solver_index(&self) -> usize {
        let w = self.weighted_gaps();
        (0..w.len()).fold(0, |b, i| if w[i] <= w[b] { i } else { b })
    }

    /// `sum_j sigma_dg[j] * dist_j`.
    pub fn mixed_distribution(&self) -> Result<InstanceDistribution> {
        InstanceDistribution::mixture(self.sigma_dg.clone(), self.dists.clone())
    }

    fn record(&mut self, epoch: usize, sol: &NashSolution) {
        self.history.push(EpochRecord {
            epoch,
            sigma_ss: sol.sigma_ss.clone(),
            sigma_dg: sol.sigma_dg.clone(),
            value: sol.value,
            exploitability: self.exploitability(),
        });
    }

    /// Utility matrix as CSV with `solver_k` row labels and `dist_k` column labels.
    pub fn write_utility_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(crate::cop::io::csv_err)?;
        let mut header = vec!["solver".to_string()];
        header.extend((0..self.dists.len()).map(|j| format!("dist_{j}")));
        w.write_record(&header).map_err(crate::cop::io::csv_err)?;
        for (i, row) in self.utility.iter().enumerate() {
            let mut rec = vec![format!("solver_{i}")];
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec).map_err(crate::cop::io::csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Sidecar with the per-epoch meta-strategies, value and exploitability.
    pub fn sidecar_json(&self) -> serde_json::Value {
        json!({
            "scale": self.scale,
            "M": self.eval_samples,
            "eval_seed": self.eval_seed,
            "column_seeds": (0..self.dists.len()).map(|j| self.column_seed(j)).collect::<Vec<_>>(),
            "distributions": self.dists.iter().map(InstanceDistribution::label).collect::<Vec<_>>(),
            "sigma_ss": self.sigma_ss,
            "sigma_dg": self.sigma_dg,
            "exploitability": self.exploitability(),
            "epochs": self.history,
            "warnings": self.warnings,
        })
    }
}

#[derive(Debug, Clone)]
pub struct DeOutcome {
    pub best_solver: SolverPolicy,
    pub mixed_dist: InstanceDistribution,
    pub game: MetaGame,
}

/// Distributional exploration at one scale.
///
/// Starts from `{(solver_init, uniform)}` and runs `psro_epochs` rounds of
/// best responses. `flow_init` warm-starts the generator; otherwise the first
/// generator is a fresh identity flow.
pub fn run_de(
    solver_init: &SolverPolicy,
    scale: usize,
    cfg: &DeConfig,
    flow_init: Option<&FlowDistribution>,
    seed: u64,
) -> Result<DeOutcome> {
    if cfg.psro_epochs == 0 {
        return Err(Error::Config(vec!["psro_epochs must be at least 1".into()]));
    }
    let oracle = Oracle { exact_limit: cfg.exact_limit, proxy_seed: seed::derive(seed, seed::stream::PROXY) };
    let mut game = MetaGame::new(
        solver_init.clone(),
        InstanceDistribution::uniform(scale),
        cfg.eval_samples,
        seed::derive(seed, seed::stream::EVAL),
        oracle,
        cfg.meta_solver,
    )?;
    let sol = game.resolve()?;
    game.record(0, &sol);
    let mut latest_flow = match flow_init {
        Some(f) => f.clone(),
        None => FlowDistribution::new(cfg.flow, seed::derive(seed, seed::stream::FLOW))?,
    };
    for epoch in 1..=cfg.psro_epochs {
        let e = epoch as u64;
        let solver_seed = seed::derive2(seed, seed::stream::TRAIN, e);
        let gen_seed = seed::derive2(seed, seed::stream::FLOW, e);
        let latest_solver = game.solvers.last().expect("non-empty").clone();
        match cfg.mode {
            DeMode::Simultaneous => {
                let (new_solver, srep) =
                    train_solver_oracle(&latest_solver, &game.sigma_dg, &game.dists, &cfg.solver_train, solver_seed)?;
                let flow = {
                    let refs: Vec<&dyn TourSolver> = game.solvers.iter().map(|s| s as &dyn TourSolver).collect();
                    train_generator_oracle(&latest_flow, &refs, &game.sigma_ss, scale, &cfg.generator_train, gen_seed)?
                };
                game.solver_gradient_steps += srep.gradient_steps;
                let aborted = [srep.aborted.map(|a| format!("solver oracle: {a}")), flow.1.aborted.map(|a| format!("generator oracle: {a}"))];
                if let Some(w) = aborted.into_iter().flatten().reduce(|a, b| format!("{a}; {b}")) {
                    game.warnings.push(format!("epoch {epoch}: {w}"));
                    break;
                }
                latest_flow = flow.0;
                game.add_solver(new_solver)?;
                game.add_dist(InstanceDistribution::flow(scale, latest_flow.clone()), Some(latest_flow.clone()))?;
            }
            DeMode::Sequential => {
                let (flow, grep) = {
                    let refs: Vec<&dyn TourSolver> = game.solvers.iter().map(|s| s as &dyn TourSolver).collect();
                    train_generator_oracle(&latest_flow, &refs, &game.sigma_ss, scale, &cfg.generator_train, gen_seed)?
                };
                if let Some(a) = grep.aborted {
                    game.warnings.push(format!("epoch {epoch}: generator oracle: {a}"));
                    break;
                }
                latest_flow = flow;
                game.add_dist(InstanceDistribution::flow(scale, latest_flow.clone()), Some(latest_flow.clone()))?;
                game.resolve()?;
                let (new_solver, srep) =
                    train_solver_oracle(&latest_solver, &game.sigma_dg, &game.dists, &cfg.solver_train, solver_seed)?;
                game.solver_gradient_steps += srep.gradient_steps;
                if let Some(a) = srep.aborted {
                    game.warnings.push(format!("epoch {epoch}: solver oracle: {a}"));
                    game.resolve()?;
                    break;
                }
                game.add_solver(new_solver)?;
            }
        }
        let sol = game.resolve()?;
        game.record(epoch, &sol);
    }
    let best = game.solvers[game.best_solver_index()].clone();
    let mixed_dist = game.mixed_distribution()?;
    Ok(DeOutcome { best_solver: best, mixed_dist, game })
}
