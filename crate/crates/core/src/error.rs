use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unreadable image {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("script '{0}' assigned to no split")]
    ScriptWithoutSplit(String),

    #[error("script '{script}' assigned to two splits ({first} and {second})")]
    ScriptInTwoSplits {
        script: String,
        first: String,
        second: String,
    },

    #[error("script '{0}' listed in manifest but missing from data root")]
    MissingScript(String),

    #[error("invalid glyph: {0}")]
    InvalidGlyph(String),

    #[error("font error: {0}")]
    Font(String),

    #[error("script '{0}' has no renderable glyphs")]
    EmptyScript(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unknown architecture '{0}'")]
    UnknownArchitecture(String),

    #[error("no positive pairs in batch")]
    NoPositivePairs,

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checksum mismatch: expected {expected}, found {found}")]
    Checksum { expected: String, found: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("zero rank variance")]
    ZeroRankVariance,

    #[error("unrelated script coincides with related pair")]
    DegenerateSeparability,

    #[error("report error: {0}")]
    Report(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
