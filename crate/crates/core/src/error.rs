//! Crate-wide error type.
//!
//! Errors fall into three coarse classes that the CLI maps onto distinct
//! exit codes: configuration/validation problems, I/O and file-format
//! problems, and numeric failures (non-finite losses, dimension mismatches
//! caught at run time).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or arguments (bad field values, inconsistent
    /// settings, unknown relations, out-of-range indices).
    #[error("config error: {0}")]
    Config(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A file exists but its contents do not parse or do not match the
    /// documented schema. `line` is 1-based when known.
    #[error("format error in {path}{}: {msg}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Format {
        path: String,
        line: Option<usize>,
        msg: String,
    },

    /// A numeric invariant was violated (NaN/inf loss, distribution failed
    /// to normalize, shape mismatch discovered mid-computation).
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn format(path: impl Into<String>, line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
