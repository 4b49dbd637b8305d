//! Model parameters, the generative simulator, and every conditional log
//! density with its derivatives.

mod affinity;
mod params;
mod rates;
mod simulate;
mod tau;

use thiserror::Error;

pub use affinity::{grad_affinity, hess_affinity_numeric, logpost_affinity, theta_jacobian, AffinityTarget};
pub use params::{
    theta_from, BetaTable, DocParams, GenerativeConfig, Hyperparams, SparseTheta, WordTreeParams,
};
pub use rates::{exposure, grad_rates, hess_rates, logpost_rates, RateData, RateTarget, WordObservations};
pub use simulate::{simulate_corpus, simulate_held_out, simulate_membership, simulate_word, SimulatedCorpus};
pub use tau::{logpost_tau_hyper, tau_profile_mode, TauHyperDensity};

/// Floor applied to θᵀβ before taking its logarithm.
pub const RATE_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("no active labels")]
    AllLabelsInactive,
    #[error("non-finite value")]
    NonFiniteValue,
    #[error("non-positive sample {0}")]
    NonPositiveSample(f64),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
