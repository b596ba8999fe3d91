//! Learned iterative optimizers with PAC-Bayesian certificates for their
//! convergence time, convergence rate and trajectory-event probabilities.

pub mod baselines;
pub mod certify;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod learned;
pub mod linalg;
pub mod problems;
pub mod rng;
pub mod train;
pub mod trajectory;

pub use error::{Error, Result};
