use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed RIFF/WAVE header: {0}")]
    MalformedHeader(String),
    #[error("unsupported WAV encoding: format tag {0} (only 16-bit PCM is accepted)")]
    UnsupportedEncoding(u16),
    #[error("unsupported WAV channel count {0} (only mono is accepted)")]
    UnsupportedChannels(u16),
    #[error("unsupported WAV bit depth {0} (only 16-bit is accepted)")]
    UnsupportedBitDepth(u16),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("duplicate record ({utt}, {source_kind}) within one manifest")]
    DuplicateRecord { utt: String, source_kind: String },
    #[error("utterance {utt} is assigned to conflicting speakers {first} and {second}")]
    SpeakerConflict { utt: String, first: String, second: String },
    #[error("trial line {line}: utterance {utt} not found in embedding archive")]
    MissingUtterance { line: usize, utt: String },

    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("matrix is not positive definite: {0}")]
    Singular(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }

    /// True for failures of the numerical routines (singular covariances,
    /// diverging losses, degenerate vectors).
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::ZeroNorm | Error::Singular(_) | Error::NonFinite(_))
    }
}
