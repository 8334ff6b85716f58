//! Euclidean TSP instances, reference solvers, optimality gaps and instance
//! distributions.

mod distribution;
mod exact;
mod gap;
mod heuristics;
mod instance;
pub mod io;

pub use distribution::{
    mixed_gaussian_instance, normalize_joint, sample_from, sample_mixed_gaussian, DistKind, InstanceDistribution,
    LambdaMode, MixedGaussian, MAX_NORMALIZATION_ATTEMPTS,
};
pub(crate) use distribution::{check_simplex, draw_index};
pub use exact::{exact_oracle, DEFAULT_EXACT_LIMIT};
pub use gap::{
    expected_gap, instance_gap, optimality_gap, EvalSet, GapEstimate, GapReport, HeuristicSolver, Oracle, OracleKind,
    OracleSolver, TourSolver,
};
pub use heuristics::{heuristic_solve, proxy_oracle, InsertionMethod, PROXY_RANDOM_RESTARTS};
pub use instance::{tour_length, Instance, Point, Tour};
