use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the fault-model library.
#[derive(Debug, Error)]
pub enum FcpError {
    #[error("required file missing: {0}")]
    FileMissing(PathBuf),

    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: u64,
        msg: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("cannot stratify: {0}")]
    Stratify(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("label out of range: {0}")]
    Label(String),

    #[error("probability rows do not sum to one: {0}")]
    NonStochasticRows(String),

    #[error("model missing: {0}")]
    ModelMissing(String),

    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FcpError {
    pub(crate) fn parse(file: impl Into<String>, line: u64, msg: impl Into<String>) -> Self {
        FcpError::Parse {
            file: file.into(),
            line,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FcpError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by input data rather than by how the library was called.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, FcpError::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, FcpError>;
