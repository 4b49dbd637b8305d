//! Hierarchical Poisson convolution topic model.

pub mod checkgrad;
pub mod classify;
pub mod corpus;
pub mod density;
pub mod dist;
pub mod model;
pub mod optim;
pub mod rng;
pub mod special;
pub mod tree;
pub mod estimands;
pub mod io;
pub mod sampler;
