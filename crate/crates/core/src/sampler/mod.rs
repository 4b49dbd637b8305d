//! Block Gibbs sampler: scheduled conditional HMC for the rate and affinity
//! blocks, conjugate draws for the variance hyperparameters.

mod chain;
mod config;
mod conjugate;
mod hmc;

use thiserror::Error;

pub use chain::{
    gibbs_scan, run_chain, run_chain_checkpointed, run_chain_from, update_doc_block, update_hyperparams, update_word_block, Block,
    BlockCounter, ChainState, Checkpoint, DiagnosticRow, PosteriorEstimates, ADAPT_TARGET, INIT_NU, INIT_SIGMA2,
    INIT_VARIANCE_FLOOR,
};
pub use config::{ConfigError, SamplerConfig};
pub use conjugate::{
    draw_gamma2_psi, draw_lambda2_eta, gamma2_conditional, lambda2_conditional, tau2_conditional, InvChi2,
    SCALE_FLOOR,
};
pub use hmc::{schmc_step, schmc_update, ConditionalTarget, HmcSettings, HmcStep, MassMatrix};

use crate::model::ModelError;
use crate::tree::TreeError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("mass matrix is not positive definite")]
    MassMatrixNotPD,
    #[error("empty block: {0}")]
    EmptyBlock(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
