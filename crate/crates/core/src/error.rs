use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input document; line and column are 1-based.
    #[error("{what}: syntax error at line {line}, column {column}: {message}")]
    Syntax {
        what: String,
        line: usize,
        column: usize,
        message: String,
    },

    /// A value parsed but violates a documented invariant.
    #[error("{field} {reason}")]
    Invalid { field: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("no model-function rule for state `{0}`")]
    Unmapped(String),

    #[error("cannot compose model functions: {0}")]
    DomainMismatch(String),

    #[error("underdetermined fit: {0}")]
    Underdetermined(String),

    #[error("simulation failed: {0}")]
    Simulation(String),

    #[error("no feasible partition: {0}")]
    Infeasible(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn syntax(what: &str, err: &serde_json::Error) -> Self {
        // serde_json reports data errors (unknown field, bad type) with a
        // position too; keep them as syntax errors so callers get a location.
        Error::Syntax {
            what: what.to_string(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
