use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("empty transcript{0}")]
    EmptyTranscript(String),

    #[error("documentary has no segments")]
    EmptyDocumentary,

    #[error("chunk count must be at least 1")]
    ZeroChunks,

    #[error("script marker error at byte {offset}: {message}")]
    Marker { offset: usize, message: String },

    #[error("empty script")]
    EmptyScript,

    #[error("invalid script: {0}")]
    InvalidScript(String),

    #[error(
        "cannot serialize unresolved quote placeholder at element {0} as a direct-quote script"
    )]
    UnresolvedPlaceholder(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("zero-norm vector{0}")]
    ZeroNorm(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty vector")]
    EmptyVector,

    #[error("empty negative set for query {0}")]
    EmptyNegatives(usize),

    #[error("batch lists are misaligned: {0}")]
    Misaligned(String),

    #[error("query has neither previous nor next narration")]
    EmptyQuery,

    #[error("no training samples")]
    NoSamples,

    #[error("clip {0} not found in pool")]
    MissingClip(String),

    #[error("clip {clip_id} is missing {what}")]
    MissingEmbedding { clip_id: String, what: String },

    #[error("duplicate id {0}")]
    DuplicateId(String),

    #[error("candidate pool is empty")]
    EmptyPool,

    #[error("pool of {available} clips is too small for {requested} negatives plus the positive")]
    PoolTooSmall { available: usize, requested: usize },

    #[error("k must be at least 1")]
    ZeroK,

    #[error("no ground truth for query {0}")]
    MissingTruth(String),

    #[error("placeholder at element {0} has no surrounding narration")]
    UnresolvablePlaceholder(usize),

    #[error("frame pool is empty")]
    EmptyFramePool,

    #[error("window of {window} frames is longer than the {frames}-frame video")]
    WindowTooLong { window: usize, frames: usize },

    #[error("no candidate left for element {0} under the repetition window")]
    DedupExhausted(usize),

    #[error("frame {0} has no embedding")]
    MissingFrame(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}
