use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rank-deficient design: regressor `{0}` is collinear with earlier columns")]
    RankDeficient(String),

    #[error("perfect separation: {0}")]
    Separation(String),

    #[error("optimizer did not converge: {0}")]
    NotConverged(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("link mismatch: {0}")]
    LinkMismatch(String),

    #[error("all {0} bootstrap replications failed")]
    BootstrapFailed(usize),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
