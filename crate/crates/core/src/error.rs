use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = TwistError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TwistError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("sequence length {actual} does not match expected length {expected}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("segment size mismatch: {left} vs {right}")]
    SegmentMismatch { left: usize, right: usize },

    #[error("duplicate sequence id {0}")]
    DuplicateId(u64),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("invariant violation: {0}")]
    Invariant(String),
}

/// Coarse error category, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    NotFound,
    Io,
    Invariant,
}

impl TwistError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            TwistError::Input(_)
            | TwistError::LengthMismatch { .. }
            | TwistError::SegmentMismatch { .. }
            | TwistError::DuplicateId(_) => ErrorKind::Input,
            TwistError::NotFound(_) => ErrorKind::NotFound,
            TwistError::Io { .. } | TwistError::Format { .. } => ErrorKind::Io,
            TwistError::Invariant(_) => ErrorKind::Invariant,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            return TwistError::NotFound(path.display().to_string());
        }
        TwistError::Io { path, source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        TwistError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(TwistError::LengthMismatch { expected, actual });
    }
    Ok(())
}
