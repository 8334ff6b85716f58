use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distribution::InstanceDistribution;
use super::exact::{exact_oracle, DEFAULT_EXACT_LIMIT};
use super::heuristics::{heuristic_solve, proxy_oracle, InsertionMethod};
use super::instance::{Instance, Tour};
use crate::error::{Error, Result};
use crate::seed;

/// `(solver_cost - oracle_cost) / oracle_cost`, as a fraction.
pub fn optimality_gap(solver_cost: f64, oracle_cost: f64) -> Result<f64> {
    if !(oracle_cost > 0.0) || !oracle_cost.is_finite() {
        return Err(Error::InvalidOracleValue(oracle_cost));
    }
    Ok((solver_cost - oracle_cost) / oracle_cost)
}

/// Gap of one solved instance. Instances whose nodes all coincide have
/// optimum 0 and count as solved exactly.
pub fn instance_gap(solver_cost: f64, oracle_cost: f64) -> Result<f64> {
    if oracle_cost == 0.0 && solver_cost == 0.0 {
        return Ok(0.0);
    }
    optimality_gap(solver_cost, oracle_cost)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Exact,
    Proxy,
}

impl OracleKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Proxy => "proxy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub solver_cost: f64,
    pub oracle_cost: f64,
    pub gap: f64,
    pub oracle_kind: OracleKind,
}

/// Reference solver for gaps: Held-Karp up to `exact_limit`, proxy above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    pub exact_limit: usize,
    pub proxy_seed: u64,
}

impl Default for Oracle {
    fn default() -> Self {
        Self { exact_limit: DEFAULT_EXACT_LIMIT, proxy_seed: 0 }
    }
}

impl Oracle {
    pub fn with_limit(exact_limit: usize) -> Self {
        Self { exact_limit, ..Self::default() }
    }

    pub fn kind_for(&self, n: usize) -> OracleKind {
        if n <= self.exact_limit {
            OracleKind::Exact
        } else {
            OracleKind::Proxy
        }
    }

    pub fn solve(&self, instance: &Instance) -> Result<(Tour, OracleKind)> {
        match self.kind_for(instance.n()) {
            OracleKind::Exact => Ok((exact_oracle(instance, self.exact_limit)?, OracleKind::Exact)),
            OracleKind::Proxy => Ok((proxy_oracle(instance, self.proxy_seed)?, OracleKind::Proxy)),
        }
    }

    pub fn report(&self, instance: &Instance, solver_cost: f64) -> Result<GapReport> {
        let (tour, kind) = self.solve(instance)?;
        Ok(GapReport {
            solver_cost,
            oracle_cost: tour.length,
            gap: optimality_gap(solver_cost, tour.length)?,
            oracle_kind: kind,
        })
    }
}

/// Anything that maps an instance to a tour. `seed` drives stochastic solvers.
pub trait TourSolver: Send + Sync {
    fn name(&self) -> String;
    fn solve(&self, instance: &Instance, seed: u64) -> Result<Tour>;
}

impl<T: TourSolver + ?Sized> TourSolver for &T {
    fn name(&self) -> String {
        (**self).name()
    }
    fn solve(&self, instance: &Instance, seed: u64) -> Result<Tour> {
        (**self).solve(instance, seed)
    }
}

impl<T: TourSolver + ?Sized> TourSolver for std::sync::Arc<T> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn solve(&self, instance: &Instance, seed: u64) -> Result<Tour> {
        (**self).solve(instance, seed)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HeuristicSolver(pub InsertionMethod);

impl TourSolver for HeuristicSolver {
    fn name(&self) -> String {
        self.0.name().to_string()
    }
    fn solve(&self, instance: &Instance, seed: u64) -> Result<Tour> {
        heuristic_solve(instance, self.0, seed)
    }
}

/// Exposes the gap oracle itself as a solver (its gap is zero by construction).
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleSolver(pub Oracle);

impl TourSolver for OracleSolver {
    fn name(&self) -> String {
        "exact".into()
    }
    fn solve(&self, instance: &Instance, _seed: u64) -> Result<Tour> {
        Ok(self.0.solve(instance)?.0)
    }
}

/// Monte Carlo estimate of the expected gap over a distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GapEstimate {
    pub mean: f64,
    pub gaps: Vec<f64>,
    pub oracle_kind: OracleKind,
}

/// Mean optimality gap of `solver` over `samples` instances drawn from `dist`.
///
/// Instance `i` is sampled and solved with seeds derived from `(seed, i)`, and
/// the mean is summed in index order, so parallel and serial runs agree
/// bit-for-bit.
pub fn expected_gap(
    solver: &dyn TourSolver,
    dist: &InstanceDistribution,
    samples: usize,
    seed: u64,
    oracle: &Oracle,
) -> Result<GapEstimate> {
    if samples == 0 {
        return Err(Error::InvalidDistribution("expected_gap needs at least one sample".into()));
    }
    let instances = dist.sample(samples, seed)?;
    let set = EvalSet::new(instances, oracle)?;
    set.evaluate(solver, seed::derive(seed, seed::stream::DECODE))
}

/// Fixed instances with cached oracle costs, for repeated evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub instances: Vec<Instance>,
    pub oracle_costs: Vec<f64>,
    pub oracle_kind: OracleKind,
}

impl EvalSet {
    pub fn new(instances: Vec<Instance>, oracle: &Oracle) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::InvalidDistribution("evaluation set is empty".into()));
        }
        let solved: Vec<(f64, OracleKind)> = instances
            .par_iter()
            .map(|inst| oracle.solve(inst).map(|(t, k)| (t.length, k)))
            .collect::<Result<_>>()?;
        let oracle_kind =
            if solved.iter().all(|s| s.1 == OracleKind::Exact) { OracleKind::Exact } else { OracleKind::Proxy };
        Ok(Self { instances, oracle_costs: solved.into_iter().map(|s| s.0).collect(), oracle_kind })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn scale(&self) -> usize {
        self.instances[0].n()
    }

    /// Per-instance gaps of `solver`; instance `i` is solved with seed `derive(seed, i)`.
    pub fn evaluate(&self, solver: &dyn TourSolver, seed: u64) -> Result<GapEstimate> {
        let gaps: Vec<f64> = self
            .instances
            .par_iter()
            .zip(&self.oracle_costs)
            .enumerate()
            .map(|(i, (inst, &oc))| {
                let tour = solver.solve(inst, seed::derive(seed, i as u64))?;
                instance_gap(tour.length, oc)
            })
            .collect::<Result<_>>()?;
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        Ok(GapEstimate { mean, gaps, oracle_kind: self.oracle_kind })
    }
}
