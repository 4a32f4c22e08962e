//! Error type shared across the crate.

use std::fmt;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
///
/// The sample-file variants (`BadMagic`, `UnsupportedVersion`, `Truncated`)
/// are deliberately separate so callers can distinguish corruption kinds.
#[derive(Debug)]
pub enum Error {
    /// Tensor extents do not line up for an operation. Names both shapes.
    Shape { op: &'static str, detail: String },
    /// A model/experiment configuration is internally inconsistent.
    Config(String),
    /// A documented precondition of an operation was violated.
    Contract(String),
    /// Non-finite value where the contract requires finite arithmetic.
    Numeric(String),
    /// Sample file does not start with the expected magic bytes.
    BadMagic { found: [u8; 4] },
    /// Sample file has a format version this build does not read.
    UnsupportedVersion { found: u16 },
    /// Sample file ended before the declared payload was complete.
    Truncated { expected: usize, available: usize },
    /// Underlying I/O failure.
    Io(std::io::Error),
    /// Malformed JSON (configs, manifests, reports).
    Json(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, detail } => write!(f, "shape mismatch in {op}: {detail}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric failure: {msg}"),
            Error::BadMagic { found } => write!(
                f,
                "bad magic: expected 4D 4D 41 44, found {:02X} {:02X} {:02X} {:02X}",
                found[0], found[1], found[2], found[3]
            ),
            Error::UnsupportedVersion { found } => {
                write!(f, "unsupported sample format version {found}")
            }
            Error::Truncated {
                expected,
                available,
            } => write!(
                f,
                "truncated sample file: needed {expected} more bytes, found {available}"
            ),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Json(msg) => write!(f, "json error: {msg}"),
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

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
