use thiserror::Error;

/// Errors produced by the query engine and its supporting modules.
#[derive(Debug, Error)]
pub enum Error {
    /// A value lies outside the domain an operation accepts.
    #[error("domain error: {0}")]
    Domain(String),
    /// Invalid configuration such as an unknown timezone.
    #[error("config error: {0}")]
    Config(String),
    /// A required column or property is missing or duplicated.
    #[error("schema error: {0}")]
    Schema(String),
    /// Ingest accepted zero rows.
    #[error("dataset is empty: no rows were accepted")]
    EmptyDataset,
    #[error("not found: {0}")]
    NotFound(String),
    /// A query composition the model does not allow, e.g. linking a merged query.
    #[error("illegal composition: {0}")]
    Composition(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    pub fn not_found(msg: impl Into<String>) -> Self {
        Error::NotFound(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
