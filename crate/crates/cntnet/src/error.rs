use std::io;
use std::path::{Path, PathBuf};

use cntnet_core::Violation;
use thiserror::Error;

/// Malformed bytes in one of the binary formats. Offsets count from the start of
/// the buffer handed to the parser.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("byte {offset}: bad magic {found:02x?}, expected {expected}")]
    BadMagic {
        offset: usize,
        found: Vec<u8>,
        expected: &'static str,
    },
    #[error("byte {offset}: truncated, {needed} bytes declared but {available} present")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("byte {offset}: {detail}")]
    Invalid { offset: usize, detail: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("unsupported format version `{0}`")]
    Version(String),
    #[error("blob holds {found} bytes, manifest declares {declared}")]
    LengthMismatch { declared: usize, found: usize },
    #[error("network fails validation: {}", join(.0))]
    Violations(Vec<Violation>),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Core(#[from] cntnet_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Machine-readable error class, also printed by the binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Usage,
    Io,
    Numeric,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Usage => "usage",
            Category::Io => "io",
            Category::Numeric => "numeric",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Category::Usage => 1,
            Category::Io => 2,
            Category::Numeric => 3,
        }
    }
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn parse(path: impl AsRef<Path>, source: ParseError) -> Self {
        Error::Parse {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn json(path: impl AsRef<Path>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn csv(path: impl AsRef<Path>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn category(&self) -> Category {
        use cntnet_core::Error as Core;
        match self {
            Error::Usage(_) => Category::Usage,
            Error::Io { .. } | Error::Parse { .. } | Error::Json { .. } | Error::Csv { .. } => Category::Io,
            Error::Core(Core::Structural(_) | Core::Parameter(_)) => Category::Usage,
            Error::Core(Core::IllConditionedDisparity { .. } | Core::Diverged { .. }) => Category::Numeric,
        }
    }
}
