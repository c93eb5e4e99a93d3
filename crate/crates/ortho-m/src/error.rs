//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by solvers, loss assembly, first-stage fits, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input data failed a structural check (bad column, wrong width, non-finite entry).
    #[error("data error: {0}")]
    Data(String),

    /// A nuisance evaluation is missing or unusable for a specific observation.
    #[error("missing nuisance value for observation {row}: {what}")]
    MissingNuisance { row: usize, what: String },

    /// The correction denominator I(z) fell below the configured floor.
    #[error("singular correction at observation {row}: |I(z)| = {value:.3e} below floor {floor:.3e}")]
    SingularCorrection { row: usize, value: f64, floor: f64 },

    /// The smooth loss or its gradient became non-finite during optimization.
    #[error("numeric failure at solver iteration {iteration}: {what}")]
    NumericFailure { iteration: usize, what: String },

    /// A pipeline was configured inconsistently (fold sizes, radii, oracle without truth, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Equilibrium fixed-point iteration failed to converge.
    #[error("equilibrium fixed point did not converge within {max_iters} iterations (residual {residual:.3e})")]
    FixedPoint { max_iters: usize, residual: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
