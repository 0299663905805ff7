//! Crate-wide error type with a coarse class per failure mode.
//!
//! The class drives the CLI exit code, so every error maps to exactly one
//! of: I/O, validation, training divergence, or missing/stale artifact.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error class; the CLI maps each class to a distinct exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Validation,
    Divergence,
    MissingArtifact,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("training diverged at epoch {epoch}: validation MSE {val_mse:.6} exceeded 10x the initial {initial:.6} for 5 consecutive epochs")]
    Divergence {
        epoch: usize,
        val_mse: f64,
        initial: f64,
    },

    #[error("missing or stale upstream artifact `{name}`: {reason}")]
    MissingArtifact { name: String, reason: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::Validation(_) => ErrorClass::Validation,
            Error::Divergence { .. } => ErrorClass::Divergence,
            Error::MissingArtifact { .. } => ErrorClass::MissingArtifact,
        }
    }
}
