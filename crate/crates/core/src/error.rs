use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e}, tolerance {tolerance:e})")]
    NonSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("rank deficient: {context}")]
    RankDeficient { context: &'static str },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid activation slopes (s_plus = {s_plus}, s_minus = {s_minus})")]
    InvalidActivation { s_plus: f64, s_minus: f64 },

    #[error("general position violated at hidden unit {unit}: {reason}")]
    GeneralPositionViolation { unit: usize, reason: String },

    #[error("loss Hessian of sample {sample} is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NonPsdHessian { sample: usize, min_eigenvalue: f64 },

    #[error("hidden unit {unit} has no boundary data points")]
    NotBoundary { unit: usize },

    #[error("hidden unit {unit} has boundary data points; the smooth test does not apply")]
    UnexpectedBoundary { unit: usize },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("second-order constraints are linearly dependent (rank {rank}, expected {expected})")]
    RankDeficientConstraints { rank: usize, expected: usize },

    #[error("Pareto spectrum of order {order} exceeds the subset budget (max order {max})")]
    SubsetBudgetExceeded { order: usize, max: usize },

    #[error("{count} doubly-flat boundary points require 2^{count} QPs, above the budget 2^{max}")]
    PatternBudgetExceeded { count: usize, max: usize },

    #[error("sign pattern does not match the boundary index sets: {0}")]
    PatternMismatch(String),

    #[error("inequality-constrained QP has no inequality rows")]
    NoInequalities,

    #[error("descent direction is zero")]
    ZeroDirection,

    #[error("no strict decrease found along the reported descent direction (stage {stage})")]
    NoDecreaseFound { stage: String },
}
