//! Real-NVP instance generator: exact node densities, sampling, and the
//! adversarial score-function trainer.

mod density;
mod model;
mod train;

pub use density::{density_grid, mixture_density, write_density_csv, DensityCell};
pub use model::{FlowConfig, FlowDistribution, EDGE_GUARD};
pub use train::{
    instance_reward, score_gradient, score_surrogate, train_generator_oracle, GeneratorTrainConfig,
    GeneratorTrainReport, RewardMode,
};

#[cfg(test)]
mod tests;
