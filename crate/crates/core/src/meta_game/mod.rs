//! Zero-sum meta-game between the solver population and the distribution
//! population, with an exact LP equilibrium solver and the PSRO loop.

mod game;
mod nash;

pub use game::{estimate_utility_cell, run_de, DeConfig, DeMode, DeOutcome, EpochRecord, MetaGame};
pub use nash::{bilinear, exploitability, fictitious_play, solve_meta_nash, solve_with, MetaSolver, NashSolution};
