use thiserror::Error;

/// Errors raised by the Trans-Gaussian Kriging machinery.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("nonpositive observation z[{index}] = {value}")]
    NonPositiveObservation { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("trend basis {basis} is rank deficient on this design ({detail})")]
    RankDeficient { basis: String, detail: String },

    #[error("ill-conditioned matrix: Cholesky failed (min pivot {min_pivot:e})")]
    IllConditioned { min_pivot: f64 },

    #[error("projected quadratic form is not positive ({0:e})")]
    DegenerateQuadraticForm(f64),

    #[error("Fisher information is singular (min eigenvalue {min_eigenvalue:e})")]
    SingularPrior { min_eigenvalue: f64 },

    #[error("MAP optimization unreliable: {0}")]
    Unreliable(String),

    #[error("{skipped} of {total} posterior draws were ill-conditioned")]
    TooManySkipped { skipped: usize, total: usize },

    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("sampler failure: {0}")]
    Sampler(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
