use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config file not found: {}", path.display())]
    MissingFile { path: PathBuf },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {}{}: {message}", path.display(), location.map(|(l, c)| format!(" at line {l}, column {c}")).unwrap_or_default())]
    Parse {
        path: PathBuf,
        location: Option<(usize, usize)>,
        message: String,
    },

    /// Schema or range violation; `key` is the dot path of the offending entry.
    #[error("invalid config at `{key}`: {message}")]
    Validation { key: String, message: String },

    #[error("unknown config path `{path}`{}", if suggestions.is_empty() { String::new() } else { format!("; valid keys here: {}", suggestions.join(", ")) })]
    UnknownPath { path: String, suggestions: Vec<String> },

    #[error("cannot coerce `{value}` to {expected} for `{path}`")]
    Coercion {
        path: String,
        value: String,
        expected: &'static str,
    },

    #[error("malformed override directive `{0}` (expected key=value)")]
    Directive(String),

    #[error("refusing to overwrite existing file {} (use force)", path.display())]
    AlreadyExists { path: PathBuf },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid action {value} in slot {slot}: allowed range is [0, {max}]")]
    InvalidAction { slot: usize, value: usize, max: usize },

    #[error("episode finished; call reset before stepping again")]
    EpisodeFinished,

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("cannot load policy {}: {message}", path.display())]
    PolicyLoad { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn validation(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user input (configs, overrides, specs) rather
    /// than failures while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::MissingFile { .. }
                | Error::Parse { .. }
                | Error::Validation { .. }
                | Error::UnknownPath { .. }
                | Error::Coercion { .. }
                | Error::Directive(..)
                | Error::AlreadyExists { .. }
        )
    }

    /// Process exit code for the CLI: 1 for validation errors, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.is_validation() {
            1
        } else {
            2
        }
    }
}
