//! Scale curriculum: momentum-based task selection, persistent scale
//! adaption over the active ladder and the adaptive-staircase controller
//! that alternates it with distributional exploration.

mod asp;
mod psa;
mod selection;
mod staircase;

pub use asp::{
    replay_decisions, resume_asp, run_asp, run_asp_with, target_sets, AspCheckpoint, AspConfig, AspEvent, AspOutcome,
    Branch, RunRecord, TargetConfig,
};
pub use psa::{cost_vector, evaluate_target, run_psa, CurriculumState, EvalScope, PsaConfig, PsaReport};
pub use selection::{task_selection, CostHistory, DEFAULT_WINDOW};
pub use staircase::{Decision, Staircase, StaircaseConfig};
