use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("graph has a cycle; {0} requires a DAG")]
    Cyclic(&'static str),

    #[error("reachable pair ({src}, {dst}) has hierarchical difference {delta} < 1")]
    LevelMismatch { src: String, dst: String, delta: i64 },

    #[error("reachability closure too large: {nnz} pairs exceeds cap {cap}")]
    ClosureTooLarge { nnz: u64, cap: u64 },

    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("nothing to fit: {0}")]
    Empty(&'static str),

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("not a model file (bad magic header)")]
    BadMagic,

    #[error("model format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("found only {found} of {needed} valid negative pairs after {attempts} attempts")]
    NotEnoughNegatives {
        found: usize,
        needed: usize,
        attempts: usize,
    },

    #[error("xml error: {0}")]
    Xml(String),

    #[error("cannot embed cold question `{0}`: no usable history and no text vector")]
    CannotEmbed(String),

    #[error("stage `{stage}` failed")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }
}
