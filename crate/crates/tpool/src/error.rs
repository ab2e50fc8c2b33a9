//! Error taxonomy shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failures surfaced by the library.
///
/// The variants map onto process exit codes in the CLI: config/usage
/// problems exit with 2, data/shape/numeric problems with 3 and
/// verification failures with 1.
#[derive(Debug, Error)]
pub enum Error {
    /// A file could not be parsed (malformed row, bad integer, bad header).
    #[error("parse error: {0}")]
    Parse(String),

    /// Input data violates a documented invariant (non-finite value,
    /// label out of range, empty input).
    #[error("data error: {0}")]
    Data(String),

    /// A configuration value is out of range or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// Numeric contract violated (asymmetric matrix, non-finite loss).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Tensor/sequence dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// Checkpoint or artifact file is malformed or of the wrong version.
    #[error("format error: {0}")]
    Format(String),

    /// Training diverged or could not proceed.
    #[error("train error: {0}")]
    Train(String),

    /// Underlying I/O failure, annotated with the path involved.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
