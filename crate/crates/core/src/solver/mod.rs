//! Attention/pointer constructive policy for TSP and its REINFORCE trainer.

mod policy;
mod train;

pub use policy::{Choice, DecodeMode, DecodeTrace, PolicyConfig, SolverPolicy};
pub use train::{
    reinforce_gradient, reinforce_step, reinforce_surrogate, train_solver_oracle, Rollout, SolverObjective,
    SolverTrainConfig, SolverTrainReport,
};

use crate::cop::{expected_gap, GapEstimate, InstanceDistribution, Oracle, TourSolver};
use crate::error::Result;

/// Expected gap of a solver under greedy decoding.
pub fn evaluate_solver(
    solver: &dyn TourSolver,
    dist: &InstanceDistribution,
    samples: usize,
    seed: u64,
    oracle: &Oracle,
) -> Result<GapEstimate> {
    expected_gap(solver, dist, samples, seed, oracle)
}
