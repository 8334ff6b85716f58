use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What the controller asks the pipeline to do next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    /// Distributional exploration at a newly added scale.
    De(usize),
    /// Scale adaption over the whole ladder.
    Psa,
    /// The ladder is exhausted.
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaircaseConfig {
    pub n_start: usize,
    pub n_step: usize,
    pub n_max: usize,
    /// Threshold on the evaluation result, in percent.
    pub alpha: f64,
    pub patience: usize,
    /// Allow a new scale equal to `n_max`; by default only strictly smaller ones are added.
    #[serde(default)]
    pub include_top_scale: bool,
}

impl StaircaseConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n_start < 2 {
            errs.push(format!("n_start must be at least 2, got {}", self.n_start));
        }
        if self.n_start > self.n_max {
            errs.push(format!("n_start ({}) exceeds n_max ({})", self.n_start, self.n_max));
        }
        if self.n_step == 0 {
            errs.push("n_step must be at least 1".into());
        }
        if !(self.alpha > 0.0) {
            errs.push(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.patience == 0 {
            errs.push("patience must be at least 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Adaptive-staircase controller.
///
/// The ladder starts at `n_start`. After each evaluation `r`, the controller
/// climbs when `r <= alpha` or the patience counter exceeds `patience`;
/// climbing adds `last + n_step` if that is below `n_max` and stops
/// otherwise. Any other outcome schedules scale adaption and increments the
/// counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Staircase {
    config: StaircaseConfig,
    scales: Vec<usize>,
    patience_count: usize,
    stopped: bool,
}

impl Staircase {
    pub fn new(config: StaircaseConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, scales: vec![config.n_start], patience_count: 0, stopped: false })
    }

    /// Restores a controller mid-run.
    pub fn with_state(config: StaircaseConfig, scales: Vec<usize>, patience_count: usize) -> Result<Self> {
        config.validate()?;
        if scales.first() != Some(&config.n_start)
            || scales.windows(2).any(|w| w[1] != w[0] + config.n_step)
            || scales.iter().any(|&n| n > config.n_max)
        {
            return Err(Error::Config(vec![format!("ladder {scales:?} does not match the staircase config")]));
        }
        Ok(Self { config, scales, patience_count, stopped: false })
    }

    pub fn config(&self) -> &StaircaseConfig {
        &self.config
    }

    pub fn scales(&self) -> &[usize] {
        &self.scales
    }

    pub fn patience_count(&self) -> usize {
        self.patience_count
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    fn admits(&self, n: usize) -> bool {
        if self.config.include_top_scale {
            n <= self.config.n_max
        } else {
            n < self.config.n_max
        }
    }

    /// Consumes one evaluation result and returns the next action.
    pub fn decide(&mut self, r: f64) -> Decision {
        if self.stopped {
            return Decision::Stop;
        }
        if r <= self.config.alpha || self.patience_count > self.config.patience {
            let next = self.scales.last().expect("ladder is never empty") + self.config.n_step;
            if self.admits(next) {
                self.scales.push(next);
                self.patience_count = 0;
                Decision::De(next)
            } else {
                self.stopped = true;
                Decision::Stop
            }
        } else {
            self.patience_count += 1;
            Decision::Psa
        }
    }

    /// Scales above the ladder top that have not been trained yet, in `(top, n_max]`.
    pub fn untrained_scales(&self) -> Vec<usize> {
        let top = *self.scales.last().expect("ladder is never empty");
        (1..).map(|k| top + k * self.config.n_step).take_while(|&n| n <= self.config.n_max).collect()
    }
}
