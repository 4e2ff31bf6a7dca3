use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported audio {property}: {detail}")]
    UnsupportedAudio { property: &'static str, detail: String },

    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },

    #[error("{what}: dimension mismatch (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("feature kind mismatch: expected {expected}, got {got}")]
    KindMismatch { expected: String, got: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("too few {what}: need at least {need}, got {got}")]
    TooFew {
        what: &'static str,
        need: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("phone {phone} assigned two {category} attributes ({first}, {second})")]
    AttributeConflict {
        phone: String,
        category: String,
        first: String,
        second: String,
    },

    #[error("unknown phone label {0:?}")]
    UnknownPhone(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("posterior out of range in {utterance}: frame {frame}, class {class}, value {value}")]
    PosteriorRange {
        utterance: String,
        frame: usize,
        class: usize,
        value: f64,
    },

    #[error("posterior rows of {utterance} must sum to 1: frame {frame} sums to {sum}")]
    PosteriorRowSum {
        utterance: String,
        frame: usize,
        sum: f64,
    },

    #[error("phone {0} has no confusable partner under the attribute map")]
    NoConfusablePartner(String),

    #[error("manifest line {line}: {detail}")]
    ManifestRow { line: usize, detail: String },

    #[error("no features found for speaker {0}")]
    NoFeatures(String),

    #[error("speaker leak: test speaker {speaker} reached training stage {stage}")]
    SpeakerLeak { stage: &'static str, speaker: String },

    #[error("config: {0}")]
    Config(String),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Malformed {
            what,
            detail: detail.into(),
        }
    }
}
