use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("burn_in ({burn_in}) must be smaller than n_iterations ({n_iterations})")]
    BurnInTooLarge { burn_in: usize, n_iterations: usize },
    #[error("{0} must be at least 1")]
    Zero(&'static str),
    #[error("stepsize must be positive and finite, got {0}")]
    BadStepsize(f64),
    #[error("checkpoint was written by a different sampler configuration or corpus")]
    ResumeMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_iterations: usize,
    pub burn_in: usize,
    pub leapfrog_steps: usize,
    pub stepsize: f64,
    /// The likelihood Hessian is recomputed at the mode on scan 1 and every
    /// `hessian_refresh_period`-th scan after it.
    pub hessian_refresh_period: usize,
    pub seed: u64,
    pub parallelism_width: usize,
    /// Halve a block's stepsize during burn-in when its acceptance rate in a
    /// scan falls below 0.6.
    pub adapt_stepsize: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_iterations: 1000,
            burn_in: 300,
            leapfrog_steps: 20,
            stepsize: 0.1,
            hessian_refresh_period: 20,
            seed: 0,
            parallelism_width: 1,
            adapt_stepsize: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.burn_in >= self.n_iterations {
            return Err(ConfigError::BurnInTooLarge {
                burn_in: self.burn_in,
                n_iterations: self.n_iterations,
            });
        }
        if self.leapfrog_steps == 0 {
            return Err(ConfigError::Zero("leapfrog_steps"));
        }
        if self.hessian_refresh_period == 0 {
            return Err(ConfigError::Zero("hessian_refresh_period"));
        }
        if self.parallelism_width == 0 {
            return Err(ConfigError::Zero("parallelism_width"));
        }
        if !(self.stepsize > 0.0) || !self.stepsize.is_finite() {
            return Err(ConfigError::BadStepsize(self.stepsize));
        }
        Ok(())
    }

    /// Whether 1-based scan `i` belongs to the refresh schedule.
    pub fn in_schedule(&self, i: usize) -> bool {
        i >= 1 && (i - 1) % self.hessian_refresh_period == 0
    }
}
