use std::fmt;
use std::path::PathBuf;

/// Stage of the adaptation loop an error surfaced from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Preprocess,
    Homogenize,
    Cluster,
    Correspondence,
    Alignment,
    Projection,
    Classify,
    Evaluate,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Preprocess => "preprocess",
            Stage::Homogenize => "homogenize",
            Stage::Cluster => "cluster",
            Stage::Correspondence => "correspondence",
            Stage::Alignment => "alignment",
            Stage::Projection => "projection",
            Stage::Classify => "classify",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("header/schema mismatch: expected columns {expected:?}, found {found:?}")]
    SchemaMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("label token {token:?} is not in the label vocabulary")]
    UnknownLabel { token: String },
    #[error("column {column:?}: unseen category token {token:?}")]
    UnknownCategory { column: String, token: String },
    #[error("no usable rows ({dropped} dropped)")]
    NoUsableRows { dropped: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("labels must be 0 or 1, found {0}")]
    InvalidLabel(u8),
    #[error("training data contains a single class")]
    SingleClass,
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn at(self, stage: Stage) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Stage tag, when the error was raised inside a tagged pipeline stage.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
