use thiserror::Error;

use crate::bethe_vi::BetheResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension {n} exceeds the limit {max}")]
    DimensionLimit {
        op: &'static str,
        n: usize,
        max: usize,
    },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid matrix entry at ({row}, {col}): {value}")]
    InvalidEntry { row: usize, col: usize, value: f64 },

    #[error("matrix is not square: {0}")]
    NotSquare(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid cover assignment: {0}")]
    InvalidCover(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("enumeration budget exceeded: {needed} > {budget}")]
    BudgetExceeded { needed: f64, budget: f64 },

    #[error("invalid moments: mu1 = {mu1}, mu2 = {mu2} (need mu2 >= mu1^2 >= 0)")]
    InvalidMoments { mu1: f64, mu2: f64 },

    #[error("value overflows a double (natural log {log_magnitude})")]
    Overflow { log_magnitude: f64 },

    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("support violation: gamma[{row}][{col}] > 0 where a = 0")]
    SupportViolation { row: usize, col: usize },

    #[error("support admits no doubly stochastic matrix (permanent is zero)")]
    InfeasibleSupport,

    #[error("not doubly stochastic: {0}")]
    NotDoublyStochastic(String),

    #[error("no convergence after {} iterations (residual {:e})", .0.iterations, .0.residual)]
    NotConverged(Box<BetheResult>),
}

impl Error {
    /// Stable machine-readable code used in CLI diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionLimit { .. } => "dimension_limit",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidEntry { .. } => "invalid_entry",
            Error::NotSquare(_) => "not_square",
            Error::Parse(_) => "parse_error",
            Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => "file_not_found",
            Error::Io(_) => "io_error",
            Error::InvalidPermutation(_) => "invalid_permutation",
            Error::InvalidCover(_) => "invalid_cover",
            Error::InvalidConfig(_) => "invalid_config",
            Error::BudgetExceeded { .. } => "budget_exceeded",
            Error::InvalidMoments { .. } => "invalid_moments",
            Error::Overflow { .. } => "overflow",
            Error::ParameterDomain(_) => "parameter_domain",
            Error::SupportViolation { .. } => "support_violation",
            Error::InfeasibleSupport => "infeasible_support",
            Error::NotDoublyStochastic(_) => "not_doubly_stochastic",
            Error::NotConverged(_) => "not_converged",
        }
    }
}

pub(crate) fn check_dim(op: &'static str, n: usize, max: usize) -> Result<()> {
    if n > max {
        Err(Error::DimensionLimit { op, n, max })
    } else {
        Ok(())
    }
}
