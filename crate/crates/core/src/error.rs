use std::io;

use thiserror::Error;

use crate::promptblend::Component;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two inputs that must agree in shape do not.
    #[error("shape mismatch: {left} vs {right}")]
    Shape { left: String, right: String },

    /// Text input (prompt, spans, token table, config) could not be parsed.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("cannot align component {component}: {message}")]
    Alignment {
        component: Component,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    /// An instance lacks the preconditions of the reduction bound, e.g. there
    /// is no inconsistency left to reduce.
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    /// A tensor file is malformed.
    #[error("malformed tensor file at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            column,
            message: message.into(),
        }
    }

    /// Process exit code used by the `tiara` binary: 2 for validation
    /// failures, 4 for I/O and file-format failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Format { .. } => 4,
            _ => 2,
        }
    }
}
