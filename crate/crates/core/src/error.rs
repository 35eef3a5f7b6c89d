use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: max |a_ij - conj(a_ji)| = {0:e}")]
    NotHermitian(f64),

    #[error("matrix dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state of length {len} cannot be split as {da} x {db}")]
    Bipartition { len: usize, da: usize, db: usize },

    #[error("state is not normalised (norm {0})")]
    NotNormalized(f64),

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("eigensolver did not converge within {0} sweeps")]
    NoConvergence(usize),

    #[error("degenerate ground state (gap {gap:e}) at {context}")]
    Degenerate { gap: f64, context: String },

    #[error("ill-conditioned loop: overlap magnitude {0:e}")]
    IllConditionedLoop(f64),

    #[error("basis exhausted: {requested} operators requested, only {available} traceless Hermitian basis elements exist for n = {n}")]
    BasisExhausted {
        requested: usize,
        available: usize,
        n: usize,
    },

    #[error("covariance is rank deficient: {requested} components requested, only {achievable} achievable")]
    RankDeficient { requested: usize, achievable: usize },

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures that stem from the numerics (degenerate spectra,
    /// ill-conditioned loops, non-convergence) rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence(_)
                | Error::Degenerate { .. }
                | Error::IllConditionedLoop(_)
                | Error::RankDeficient { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
