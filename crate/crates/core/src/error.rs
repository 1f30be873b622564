//! Crate-wide error type.
//!
//! Errors are grouped into four coarse kinds so that callers (notably the
//! CLI) can map failures onto distinct exit codes without matching on every
//! variant.

use std::fmt;

/// Coarse classification of an [`Error`], used for CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Invalid scenario, parameters, or run configuration.
    Config,
    /// Engine misuse: out-of-order calls, duplicate submissions, bad indices.
    Protocol,
    /// Remote decision backend failed after retries (and no fallback applied).
    Backend,
    /// Filesystem or serialization failure.
    Io,
}

/// Any failure produced by the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("stage index {stage} out of range (0..{stages})")]
    StageOutOfRange { stage: usize, stages: usize },
    #[error("period {period} out of range (1..={horizon})")]
    PeriodOutOfRange { period: usize, horizon: usize },
    #[error("template error: {0}")]
    Template(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    /// The coarse kind of this error (drives CLI exit codes).
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidScenario(_) | Error::InvalidConfig(_) => ErrorKind::Config,
            Error::Protocol(_)
            | Error::StageOutOfRange { .. }
            | Error::PeriodOutOfRange { .. }
            | Error::Template(_) => ErrorKind::Protocol,
            Error::Backend(_) => ErrorKind::Backend,
            Error::Io { .. } | Error::Parse { .. } => ErrorKind::Io,
        }
    }

    /// Convenience constructor for I/O failures tagged with the path.
    pub fn io(path: impl fmt::Display, source: std::io::Error) -> Self {
        Error::Io { path: path.to_string(), source }
    }

    /// Convenience constructor for parse failures tagged with the path.
    pub fn parse(path: impl fmt::Display, message: impl fmt::Display) -> Self {
        Error::Parse { path: path.to_string(), message: message.to_string() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
