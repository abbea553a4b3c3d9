//! Bayesian structure posteriors for the two-node linear Gaussian SEM.

pub mod error;
pub mod numeric;
pub mod sem;
pub mod prior;
pub mod rates;
pub mod approx;
pub mod cli;
pub mod exact;
pub mod experiments;
pub mod ks;
pub mod stats;

pub use error::{Error, Result};
