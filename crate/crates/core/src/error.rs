use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("usage error: {0}")]
    Usage(&'static str),

    #[error("non-finite gradient for parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("game diverged at iteration {iteration}: {what}")]
    GameDivergence { iteration: usize, what: String },

    #[error("logic solve produced a non-finite objective at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error(transparent)]
    Idx(#[from] IdxError),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Artifact(#[from] ArtifactError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by numerical blow-up rather than bad input.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. }
                | Error::GameDivergence { .. }
                | Error::NonFiniteGradient { .. }
                | Error::NonFiniteObjective { .. }
        )
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("bad IDX magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated IDX file: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} at index {index} is out of range")]
    BadLabel { index: usize, label: u8 },
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("missing config key `{0}`")]
    MissingKey(&'static str),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("malformed config line {line}: `{text}`")]
    Malformed { line: usize, text: String },
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
}

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("format version mismatch: document has {found}, this build reads {expected}")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("base64 decode failed for tensor `{name}`: {reason}")]
    Decode { name: String, reason: String },
    #[error("malformed artifact document: {0}")]
    Malformed(String),
}
