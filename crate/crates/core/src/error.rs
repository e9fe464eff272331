use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed code {raw:?}: {reason}")]
    CodeParse { raw: String, reason: String },

    #[error("code {code:?} is not covered by any range table row")]
    Coverage { code: String },

    #[error("range table line {line}: {reason}")]
    RangeTable { line: usize, reason: String },

    #[error("empty label set")]
    EmptyLabelSet,

    #[error("invalid tree: {0}")]
    Tree(String),

    #[error("level {level} out of range 1..={max}")]
    LevelOutOfRange { level: usize, max: usize },

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("poincare domain error: norm {norm} is not inside the unit ball")]
    Domain { norm: f64 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("document {doc:?} references code {code:?} which is not a leaf of the tree")]
    UnknownDocLabel { doc: String, code: String },

    #[error("{path}:{line}: {reason}")]
    Format {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short stable identifier used by the CLI's machine-readable error line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::CodeParse { .. } => "E_CODE_PARSE",
            Error::Coverage { .. } => "E_COVERAGE",
            Error::RangeTable { .. } => "E_RANGE_TABLE",
            Error::EmptyLabelSet => "E_EMPTY_LABEL_SET",
            Error::Tree(_) => "E_TREE",
            Error::LevelOutOfRange { .. } => "E_LEVEL",
            Error::Shape(_) => "E_SHAPE",
            Error::Domain { .. } => "E_DOMAIN",
            Error::Config(_) => "E_CONFIG",
            Error::NonFinite(_) => "E_NON_FINITE",
            Error::UnknownLabel(_) => "E_UNKNOWN_LABEL",
            Error::UnknownDocLabel { .. } => "E_UNKNOWN_DOC_LABEL",
            Error::Format { .. } => "E_FORMAT",
            Error::Checkpoint(_) => "E_CHECKPOINT",
            Error::Undefined(_) => "E_UNDEFINED",
            Error::Io { .. } => "E_IO",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            reason: reason.into(),
        }
    }
}
