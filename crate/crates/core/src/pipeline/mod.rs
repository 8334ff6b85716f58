//! Run configuration, output directories with provenance sidecars, and the
//! commands exposed by the `asp` binary.

mod commands;
mod config;
mod landscape;
mod output;

pub use commands::{
    cmd_eval, cmd_gen_data, cmd_nash, cmd_train, cmd_weakness, distribution_density, evaluation_state,
    load_distribution, load_policy, plan_train, read_eval_csv, read_utility_csv, recompute_r, target_gap_rows,
    write_eval_csv, DataSpec, EvalRequest, EvalRow, NashReport, SolverSpec, TrainSummary, FINAL_SOLVER,
    RESUME_STATE, RUN_LOG, TARGET_GAPS,
};
pub use config::{EvalConfig, LandscapeConfig, RunConfig, WeaknessConfig};
pub use landscape::{
    filter_normalized_direction, grid_coordinate, landscape, mean_gap_percent, perturb, write_landscape_csv,
    Direction, LandscapeCell, LandscapeGrid,
};
pub use output::{sidecar_path, OutputDir, FAILED_DIR, SIDECAR_SUFFIX};
