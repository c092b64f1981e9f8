use std::path::PathBuf;

/// Failures while reading or writing one of the on-disk formats.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },
    #[error("version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u16, found: u16 },
    #[error("truncation in {what}: need {needed} bytes, {available} available")]
    Truncated {
        what: String,
        needed: u128,
        available: usize,
    },
    #[error("{count} trailing bytes after {what}")]
    TrailingBytes { what: &'static str, count: u128 },
    #[error("invalid header field {field}: {reason}")]
    InvalidHeader { field: &'static str, reason: String },
    #[error("non-finite value in {what}")]
    NonFinite { what: String },
    #[error("value out of range in {what}")]
    OutOfRange { what: String },
    #[error("transcript line {line}: {reason}")]
    Transcript { line: usize, reason: String },
    #[error("result log line {line}: {source}")]
    ResultLog {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("model: {0}")]
    Model(#[from] rnnt_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FormatError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, FormatError>;
