use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not agree.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A value violates an operation's precondition.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("out of range: {0}")]
    Range(String),

    /// Malformed or inconsistent experiment configuration. `path` is dotted.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("unsupported algorithm: {0}")]
    UnsupportedAlgorithm(String),

    /// A router could not resolve a name.
    #[error("unknown {kind} `{name}` (valid: {})", valid.join(", "))]
    Router {
        kind: &'static str,
        name: String,
        valid: Vec<&'static str>,
    },

    #[error("ingestion error in {path} at byte offset {offset}: {message}", path = path.display())]
    Ingestion {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("I/O error on {path}: {source}", path = path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A hook failed; the run is aborted.
    #[error("hook `{hook}` failed: {source}")]
    Hook {
        hook: String,
        #[source]
        source: Box<Error>,
    },

    /// Failure during `fit`, with the loop position attached.
    #[error("run aborted at task {task}, epoch {epoch}, step {step}: {source}")]
    Run {
        task: usize,
        epoch: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the experiment definition rather than by execution.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Config { .. } | Error::UnsupportedAlgorithm(_) | Error::Router { .. } => true,
            Error::Run { source, .. } | Error::Hook { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($fmt:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::$variant(format!($($fmt)+)));
        }
    };
}
pub(crate) use ensure;
