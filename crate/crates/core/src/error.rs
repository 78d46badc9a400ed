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

    #[error("line {line}: malformed JSON: {source}")]
    MalformedLine {
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("sentence {sentence}: {message}")]
    InvalidSentence { sentence: String, message: String },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("nothing to learn: no gold spans in the training data")]
    NothingToLearn,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("token id {id} out of vocabulary of size {vocab_size}")]
    OutOfVocab { id: usize, vocab_size: usize },

    #[error("sequence length {len} outside 1..={max_len}")]
    SequenceLength { len: usize, max_len: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("class id {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },

    #[error("model has no level head")]
    NoLevelHead,

    #[error("unsupported language {0:?}")]
    UnsupportedLanguage(String),

    #[error("unknown level {0:?}")]
    UnknownLevel(String),

    #[error("document {0:?} already indexed")]
    DuplicateDocument(String),

    #[error("document has no sentences")]
    NoSentences,

    #[error("line {line}: inconsistent record: {message}")]
    InconsistentRecord { line: usize, message: String },

    #[error("embedding store: {0}")]
    Embedding(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("empty evaluation")]
    EmptyEvaluation,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn sentence(id: &str, message: impl Into<String>) -> Self {
        Error::InvalidSentence {
            sentence: id.to_string(),
            message: message.into(),
        }
    }

    /// True for errors caused by user-supplied data or configuration, as
    /// opposed to internal failures.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Shape(_))
    }
}
