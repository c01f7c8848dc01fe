//! kinex: a numerical laboratory for the binomial reshuffling
//! wealth-exchange model.
//!
//! Agents pool fortunes pairwise and deal them back with fair coins; the
//! crate provides the stochastic N-agent simulator, the truncated mean-field
//! ODE, an exact small-N chain, a coupled two-ensemble contraction
//! experiment, generating-function probes, and Wasserstein diagnostics.

pub mod error;
pub mod laplace;
pub mod numeric;
pub mod rng;

pub mod agent;
pub mod chain;
pub mod coupling;
pub mod dist;
pub mod meanfield;
pub mod metrics;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
