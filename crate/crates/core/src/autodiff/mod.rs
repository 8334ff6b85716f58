//! Reverse-mode automatic differentiation over dense `f64` matrices.

mod matrix;
mod params;
mod tape;

pub use matrix::Matrix;
pub use params::{checkpoint_json, parse_checkpoint, Bound, GradSet, Param, ParamSet, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use tape::{Gradients, Tape, Var, EXP_CEIL, LOG_FLOOR};
