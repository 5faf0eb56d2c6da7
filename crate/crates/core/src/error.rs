use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Attaches a stage name to an error.
pub trait StageContext<T> {
    fn stage(self, name: impl FnOnce() -> String) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, name: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| e.in_stage(name()))
    }
}

/// Failure classes, used by the command-line driver to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: cannot decode image: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{}:{line}: {message}", path.display())]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("{what}: expected {expected}, found {found}")]
    DimMismatch {
        what: String,
        expected: String,
        found: String,
    },

    #[error("{0}")]
    Data(String),

    #[error("degenerate extrapersonal scatter on mode {mode} (all zero)")]
    DegenerateScatter { mode: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A pipeline stage failed; `source` carries the cause.
    #[error("{stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => ErrorClass::Usage,
            Error::Io { .. }
            | Error::Image { .. }
            | Error::Manifest { .. }
            | Error::Format { .. }
            | Error::DimMismatch { .. }
            | Error::Data(_) => ErrorClass::Data,
            Error::DegenerateScatter { .. } | Error::Numeric(_) => ErrorClass::Numeric,
            Error::Stage { source, .. } => source.class(),
        }
    }

    /// The innermost error under any stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
