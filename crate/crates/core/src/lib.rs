//! Adaptive-staircase PSRO training for a universal neural TSP solver.
//!
//! The crate is organised bottom-up:
//!
//! * [`cop`] - TSP instances, exact and heuristic solvers, optimality gaps and
//!   instance distributions.
//! * [`autodiff`] - a small reverse-mode AD tape over dense `f64` matrices and
//!   an Adam parameter store.
//! * [`solver`] - the attention/pointer constructive policy and its REINFORCE
//!   trainer.
//! * [`flow`] - the Real-NVP instance generator and its score-function trainer.
//! * [`meta_game`] - zero-sum meta-game bookkeeping, the LP Nash solver and the
//!   distributional-exploration loop.
//! * [`curriculum`] - momentum-based task selection, scale adaption and the
//!   staircase controller.
//! * [`pipeline`] - run configuration, persistence and analysis exports.

pub mod autodiff;
pub mod cop;
pub mod curriculum;
pub mod error;
pub mod flow;
pub mod meta_game;
pub mod pipeline;
pub mod seed;
pub mod solver;

pub use error::{Error, Result};
