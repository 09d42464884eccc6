use thiserror::Error;

/// Failure modes shared by every module.
///
/// The variants map onto the CLI exit-code contract: `Precondition`, `Schema`
/// and `Query` are user errors, the rest are numerical or internal failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("schema error at `{key}`: {msg}")]
    Schema { key: String, msg: String },
    #[error("query error: {0}")]
    Query(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("internal consistency error: {0}")]
    Internal(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the caller's input rather than by the numerics.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Precondition(_) | Error::Schema { .. } | Error::Query(_) | Error::Json(_)
        )
    }

    pub(crate) fn pre(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn num(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
