//! Error type shared by every stage of the pipeline.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed document: the offending key is named.
    #[error("parse error at `{key}`: {msg}")]
    Parse { key: String, msg: String },
    /// Well-formed but unusable configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// A solver failed or produced unusable values.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// Neumann data violate the solvability condition.
    #[error("compatibility defect {defect:.3e} (relative {relative:.3e}) {context}")]
    Compatibility {
        defect: f64,
        relative: f64,
        context: String,
    },
    /// An upstream artifact is missing.
    #[error("missing dependency: {0}")]
    Dependency(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse {
            key: key.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
