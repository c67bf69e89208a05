// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension exceeds 8")]
    DimensionOverflow,

    #[error("invalid dimension {0}: expected 2, 4 or 8")]
    InvalidDimension(usize),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid qubit index {0}")]
    InvalidQubit(usize),

    #[error("state not normalized: norm^2 = {0}")]
    NotNormalized(f64),

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("trace is {0}, expected 1")]
    BadTrace(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("matrix is not unitary (max deviation {0:e})")]
    NotUnitary(f64),

    #[error("observable is not dichotomous (max |O^2 - I| = {0:e})")]
    NotDichotomous(f64),

    #[error("eigensolver residual {0:e} exceeds tolerance")]
    EigenResidual(f64),

    #[error("expectation value has imaginary part {0:e}")]
    ComplexExpectation(f64),

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("zero coupling between spins {0} and {1}")]
    ZeroCoupling(usize, usize),

    #[error("informationally incomplete: sensing rank {rank}, need {needed}")]
    InformationallyIncomplete { rank: usize, needed: usize },

    #[error("target unreachable: {0}")]
    Unreachable(String),

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code for command-line front ends: 2 for configuration
    /// and input errors, 3 for numerical non-convergence, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::NonConvergence(_) => 3,
            Error::Io(_) | Error::Csv(_) => 4,
            _ => 2,
        }
    }
}
