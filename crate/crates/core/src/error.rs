use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("column {0} has zero norm and cannot be normalized")]
    ZeroColumn(usize),

    #[error("columns {0:?} are numerically rank deficient")]
    RankDeficient(Vec<usize>),

    #[error("exact certification needs {required} subsets but the budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("every column has already been selected")]
    AllSelected,

    #[error(
        "argmax index {index} is already selected (|c| = {value:e}); residual lost orthogonality"
    )]
    OrthogonalityViolated { index: usize, value: f64 },

    #[error("denominator (1-d)^2 - d(1+sqrt(k)) = {gap:e} is not positive; condition is vacuous")]
    DegenerateDenominator { gap: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("could not build incoherent frame after {0} attempts")]
    FrameConstruction(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
