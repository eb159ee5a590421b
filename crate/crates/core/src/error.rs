use thiserror::Error;

use crate::ordinal::OrdinalFit;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("optimizer did not converge after {iterations} iterations (gradient max-norm {grad_norm:.3e})")]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        /// Best ordered-logit iterate, when the failing fit was an ordered logit.
        best: Option<Box<OrdinalFit>>,
    },
    #[error("quasi-complete separation detected on covariate column {column} (|standardized coefficient| = {magnitude:.1})")]
    SeparationDetected { column: usize, magnitude: f64 },
    #[error("rank deficient design: {0}")]
    RankDeficientDesign(String),
    #[error("insufficient rows: {rows} rows for {columns} retained columns")]
    InsufficientRows { rows: usize, columns: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("common support is empty for treatment level {level}")]
    EmptySupport { level: usize },
    #[error("no units at treatment level {level} in subclass {subclass}")]
    EmptyCell { subclass: usize, level: usize },
    #[error("no units at treatment level {level}")]
    EmptyLevel { level: usize },
    #[error("input vector is constant; rank correlation undefined")]
    ConstantVector,
    #[error("assignment probability is zero for unit {unit}")]
    ZeroProbability { unit: u64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
