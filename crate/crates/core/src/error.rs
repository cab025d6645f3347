use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input data.
    #[error("input error: {0}")]
    Input(String),

    /// A row- or line-addressed problem in an input file.
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A stratum or group has fewer than two plots, so the sample variance
    /// is undefined.
    #[error("variance undefined: {0}")]
    VarianceUndefined(String),

    /// A poststratum with positive mapped area holds no sample plots.
    #[error("empty poststratum: stratum {stratum_id}, group {group} has mapped area {area_km2} km² but no plots")]
    EmptyGroup {
        stratum_id: u32,
        group: String,
        area_km2: f64,
    },

    /// Model cannot be fit (e.g. single-class training data).
    #[error("degenerate model: {0}")]
    Degenerate(String),

    /// Singular or ill-conditioned numerical system.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
