use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure categories surfaced by the library.
///
/// The CLI maps [`Error::Config`], [`Error::Input`] and [`Error::Usage`] to exit
/// code 2. Per-sample I/O failures during a suite run are not raised as errors;
/// they become INCONCLUSIVE verdicts instead.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed manifest, annotation file, config, or inconsistent shapes.
    #[error("configuration error: {0}")]
    Config(String),

    /// Bad runtime input: wrong image shape, class out of range, corrupt image.
    #[error("input error: {0}")]
    Input(String),

    /// API misuse, e.g. backpropagating without a cached forward pass.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
