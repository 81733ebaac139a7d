use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("variable does not belong to this tape")]
    ForeignVar,
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("parameter set is frozen")]
    Frozen,
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error("checkpoint truncated: {0}")]
    Truncated(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("{0}")]
    Degenerate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
