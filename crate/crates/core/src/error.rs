use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{context}: {message}")]
    InvalidInput {
        context: &'static str,
        message: String,
    },

    #[error("{context}: dimension mismatch: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("panel: missing cell at (population {population}, time {time}, grid {grid})")]
    MissingCell {
        population: usize,
        time: usize,
        grid: usize,
    },

    #[error("panel: row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("{context}: all eigenvalues are zero, cannot select a truncation order")]
    ZeroSpectrum { context: &'static str },

    #[error("forecast: horizon too long for bootstrap (series length {len}, horizon {horizon})")]
    HorizonTooLong { len: usize, horizon: usize },

    #[error("eval: window ending at time {window_end} failed: {source}")]
    Window {
        window_end: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("harness: replication {replication} at (N, T) = ({n}, {t}) failed: {source}")]
    Replication {
        replication: u64,
        n: usize,
        t: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(context: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidInput {
            context,
            message: message.into(),
        }
    }

    pub(crate) fn dimension(
        context: &'static str,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
