use thiserror::Error;

/// Errors raised by the geometry, density and estimation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("inner product is not positive definite")]
    NotPositiveDefinite,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("mixed-volume oracle failure: {0}")]
    OracleFailure(String),
    #[error("differential has rank below {expected} at parameter {param:?}")]
    RankDeficientDifferential { expected: usize, param: Vec<f64> },
    #[error("counting failed {failures} times over {samples} samples: {detail}")]
    CountingFailures {
        failures: usize,
        samples: usize,
        detail: String,
    },
    #[error("prediction unsupported: {0}")]
    UnsupportedPrediction(String),
    #[error("inconsistent routes: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize, context: &'static str) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected,
            found,
            context,
        })
    }
}
