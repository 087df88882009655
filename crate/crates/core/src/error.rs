use thiserror::Error;

#[derive(Debug, Error)]
pub enum EitError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-positive conductivity {value} at element {index}")]
    NonPositiveConductivity { index: usize, value: f64 },
    #[error("boundary current is not mean-free (integral {0:.3e})")]
    NotMeanFree(f64),
    #[error("internal solver failure: {0}")]
    Internal(String),
    #[error("ND matrix is numerically singular (condition number {0:.3e})")]
    IllConditioned(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("current patterns are rank deficient (rank {rank}, need {needed})")]
    RankDeficient { rank: usize, needed: usize },
    #[error("rejection sampling gave up after {0} attempts")]
    RejectionBudget(usize),
    #[error("iterative solve did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("image encoding failed: {0}")]
    Image(String),
}

impl EitError {
    /// Stable machine-readable tag, used in the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            EitError::InvalidArgument(_) => "invalid_argument",
            EitError::NonPositiveConductivity { .. } => "non_positive_conductivity",
            EitError::NotMeanFree(_) => "not_mean_free",
            EitError::Internal(_) => "internal",
            EitError::IllConditioned(_) => "ill_conditioned",
            EitError::DimensionMismatch(_) => "dimension_mismatch",
            EitError::RankDeficient { .. } => "rank_deficient",
            EitError::RejectionBudget(_) => "rejection_budget",
            EitError::NoConvergence { .. } => "no_convergence",
            EitError::Degenerate(_) => "degenerate",
            EitError::Format(_) => "format",
            EitError::Io(_) => "io",
            EitError::Json(_) => "json",
            EitError::Image(_) => "image",
        }
    }
}

pub type Result<T> = std::result::Result<T, EitError>;
