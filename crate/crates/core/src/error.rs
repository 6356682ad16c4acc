use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("symmetric eigensolver did not converge")]
    NoConvergence,

    #[error("square-root factor is singular at diagonal index {index}")]
    SingularFactor { index: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite matrix or vector entry")]
    NonFinite,

    #[error("non-finite integrand for component {component}, sample {sample} at {point:?}")]
    NonFiniteTarget {
        component: usize,
        sample: usize,
        point: Vec<f64>,
    },

    #[error("unsupported target: {0}")]
    UnsupportedTarget(String),

    #[error("invalid temperature {0} (must be >= 1)")]
    InvalidTemperature(f64),

    #[error("entropy mean-gradient vanished; annealing cannot set a start temperature")]
    DegenerateEntropyGradient,

    #[error("linear solver did not reach tolerance (relative residual {residual:e})")]
    SolverDivergence { residual: f64 },

    #[error("grid densities are defined on different grids")]
    GridMismatch,

    #[error("iteration cap of {cap} reached before tolerance")]
    IterationCap { cap: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("at iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numerical,
    Io,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn at_iteration(self, iteration: usize) -> Self {
        match self {
            e @ Error::AtIteration { .. } => e,
            e => Error::AtIteration {
                iteration,
                source: Box::new(e),
            },
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidConfig(_)
            | Error::UnsupportedTarget(_)
            | Error::InvalidTemperature(_)
            | Error::DimensionMismatch { .. }
            | Error::GridMismatch
            | Error::Parse { .. } => ErrorClass::Config,
            Error::Io { .. } => ErrorClass::Io,
            Error::AtIteration { source, .. } => source.class(),
            _ => ErrorClass::Numerical,
        }
    }
}
