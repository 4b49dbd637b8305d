//! Settings file. Every key is optional; missing keys take the defaults below.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub seed: Option<u64>,
    pub simulate: SimulateSettings,
    pub hyper: HyperSettings,
    pub sampler: SamplerSettings,
    pub summarize: SummarizeSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSettings {
    pub n_docs: usize,
    pub n_words: usize,
    pub length_rate: f64,
    pub mean_length: f64,
    /// Branching per level of the default balanced tree.
    pub levels: Vec<usize>,
    pub held_out: usize,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        Self {
            n_docs: 2000,
            n_words: 200,
            length_rate: 400.0,
            mean_length: 400.0,
            levels: vec![2, 2],
            held_out: 0,
        }
    }
}

/// A single value for every topic or one per topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerTopic {
    All(f64),
    Each(Vec<f64>),
}

impl PerTopic {
    pub fn resolve(&self, k: usize) -> Result<Vec<f64>, CliError> {
        match self {
            PerTopic::All(v) => Ok(vec![*v; k]),
            PerTopic::Each(v) if v.len() == k => Ok(v.clone()),
            PerTopic::Each(v) => Err(CliError::Config(format!(
                "hyper.eta has {} entries but the tree has {k} topics",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperSettings {
    pub psi: f64,
    pub gamma2: f64,
    pub nu: f64,
    pub sigma2: f64,
    pub eta: PerTopic,
    pub lambda2: f64,
}

impl Default for HyperSettings {
    fn default() -> Self {
        Self {
            psi: 0.0,
            gamma2: 1.0,
            nu: 4.0,
            sigma2: 0.5,
            eta: PerTopic::All(-1.0),
            lambda2: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    pub n_iterations: usize,
    pub burn_in: usize,
    pub leapfrog_steps: usize,
    pub stepsize: f64,
    pub hessian_refresh_period: usize,
    pub adapt_stepsize: bool,
    /// 0 disables checkpoints.
    pub checkpoint_every: usize,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        let d = hpc_core::sampler::SamplerConfig::default();
        Self {
            n_iterations: d.n_iterations,
            burn_in: d.burn_in,
            leapfrog_steps: d.leapfrog_steps,
            stepsize: d.stepsize,
            hessian_refresh_period: d.hessian_refresh_period,
            adapt_stepsize: d.adapt_stepsize,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarizeSettings {
    pub w: f64,
    pub n: usize,
    pub mode: String,
}

impl Default for SummarizeSettings {
    fn default() -> Self {
        Self {
            w: 0.5,
            n: 10,
            mode: "siblings".into(),
        }
    }
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
