//! Error type shared by every module in the crate.

use std::fmt;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the public API.
#[derive(Debug)]
pub enum Error {
    /// Tensor/vector extents do not line up.
    Shape { expected: String, got: String },
    /// A scalar parameter is outside its documented range.
    Param(String),
    /// A label is outside `[0, classes)`.
    Label { got: usize, classes: usize },
    /// A computation produced a non-finite value.
    Numeric(String),
    /// A byte stream does not match the expected container format.
    Format(String),
    /// A payload ended before its declared length.
    Truncated { needed: usize, got: usize },
    /// CRC-32 of the payload does not match the stored checksum.
    Checksum { stored: u32, computed: u32 },
    /// Image/label files disagree with each other.
    DataConsistency(String),
    /// Class gap is undefined (fewer than two classes present).
    UndefinedGap,
    /// The model cannot be soundly certified (e.g. surrogate-mode layers).
    CertificationRefused(String),
    /// The operation does not apply to this combination mode.
    UnsupportedMode(String),
    /// Training diverged; carries the last epoch that completed with finite loss.
    Training { last_good_epoch: Option<usize>, message: String },
    /// Configuration file or key problem.
    Config(String),
    /// Underlying I/O failure.
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { expected, got } => {
                write!(f, "shape mismatch: expected {expected}, got {got}")
            }
            Error::Param(msg) => write!(f, "invalid parameter: {msg}"),
            Error::Label { got, classes } => {
                write!(f, "label {got} out of range for {classes} classes")
            }
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Truncated { needed, got } => {
                write!(f, "truncated input: needed {needed} bytes, got {got}")
            }
            Error::Checksum { stored, computed } => write!(
                f,
                "checksum mismatch: stored {stored:#010x}, computed {computed:#010x}"
            ),
            Error::DataConsistency(msg) => write!(f, "data consistency error: {msg}"),
            Error::UndefinedGap => write!(f, "class gap undefined: dataset has a single class"),
            Error::CertificationRefused(msg) => write!(f, "certification refused: {msg}"),
            Error::UnsupportedMode(msg) => write!(f, "unsupported mode: {msg}"),
            Error::Training { last_good_epoch, message } => match last_good_epoch {
                Some(e) => write!(f, "training error after epoch {e}: {message}"),
                None => write!(f, "training error: {message}"),
            },
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl Error {
    /// Helper for the common two-slice length check.
    pub(crate) fn shape_mismatch(expected: impl fmt::Debug, got: impl fmt::Debug) -> Self {
        Error::Shape { expected: format!("{expected:?}"), got: format!("{got:?}") }
    }
}
