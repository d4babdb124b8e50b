use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument lies outside the set where the quantity is defined.
    #[error("{what} is outside its domain: {detail}")]
    Domain { what: &'static str, detail: String },

    /// Inputs that must line up (grid, policy, mean field) do not.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A configuration field failed validation.
    #[error("invalid configuration field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("reference payoff |J*| = {0:e} is too close to zero for a relative error")]
    DegenerateReference(f64),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
