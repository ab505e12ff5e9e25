use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// Exhaustive enumeration refused because the grid is too large.
    #[error("refused: grid of {size} points exceeds the limit of {limit}")]
    TooLarge { size: usize, limit: usize },

    /// Dense Cholesky guardrail for fractional Brownian motion.
    #[error("size error: {steps} steps exceeds the dense covariance limit of {limit}")]
    Size { steps: usize, limit: usize },

    /// Dyadic integrals did not stabilise before the last admissible level.
    #[error("convergence error: gap {gap:e} above tolerance {tol:e} at level {level}")]
    Convergence { gap: f64, tol: f64, level: u32 },

    /// Fewer than two usable levels for a log-linear rate fit.
    #[error("degenerate fit: {usable} usable level(s), need at least 2")]
    DegenerateFit { usable: usize },

    /// An internal identity failed; indicates a bug rather than bad input.
    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short stable tag for machine-readable reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::TooLarge { .. } => "too_large",
            Error::Size { .. } => "size",
            Error::Convergence { .. } => "convergence",
            Error::DegenerateFit { .. } => "degenerate_fit",
            Error::Consistency(_) => "consistency",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
