use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate signature: {0}")]
    DegenerateSignature(String),

    #[error("class `{0}` has no signatures")]
    EmptyClass(String),

    #[error("{what} budget exceeded: {count} > {budget}; prune the library")]
    BudgetExceeded {
        what: &'static str,
        count: u128,
        budget: u128,
    },

    #[error("rank deficiency: {0}")]
    Rank(String),

    #[error("solver diverged: {0}")]
    Divergence(String),

    #[error("clustering failed: {0}")]
    Clustering(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("payload size mismatch: header implies {expected} values, payload has {found}")]
    PayloadSize { expected: usize, found: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}

pub(crate) fn param_err(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
