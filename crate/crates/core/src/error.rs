use std::io;

use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// Each variant maps onto a stable process exit code (see [`Error::exit_code`])
/// and onto a status code of the C ABI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("degenerate taxonomy: {0}")]
    DegenerateTaxonomy(String),

    #[error("unusable calibration set: {0}")]
    UnusableCalibration(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u16, found: u16 },

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("trailing bytes after payload: expected {expected} bytes, found {found}")]
    TrailingData { expected: u64, found: u64 },

    #[error("labels absent from dataset")]
    LabelsAbsent,

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) => 2,
            Error::Numerical(_) => 3,
            Error::DegenerateTaxonomy(_) => 4,
            Error::UnusableCalibration(_) => 5,
            Error::UndefinedCorrelation(_) => 6,
            Error::BadMagic { .. } => 10,
            Error::VersionMismatch { .. } => 11,
            Error::Truncated { .. } => 12,
            Error::TrailingData { .. } => 13,
            Error::LabelsAbsent => 14,
            Error::Config(_) => 20,
            Error::Parse(_) => 21,
            Error::Io(_) => 30,
        }
    }
}
