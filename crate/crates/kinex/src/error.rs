//! Errors shared by every module of the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible range (negative rate, bad order, ...).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A run configuration fails validation before any computation starts.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Probability mass escaped the truncation window during an ODE run.
    #[error("truncation failure at t = {time}: mass defect {defect:.3e} exceeds 1e-6")]
    Truncation { time: f64, defect: f64 },

    /// A requested state space or work buffer would exceed a hard size cap.
    #[error("size limit exceeded: {what} = {count} (limit {limit})")]
    SizeLimit {
        what: &'static str,
        count: u128,
        limit: u128,
    },

    /// An iterative solver ran out of its iteration budget.
    #[error("{what}: no convergence after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: u64 },

    /// A numerical invariant was violated mid-computation.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Reading or writing an artifact failed.
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
