use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("word `{0}` occurs more than once in the lexicon")]
    DuplicateForm(String),

    #[error("malformed lexicon record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("malformed corpus record at line {line}: {reason}")]
    MalformedCorpus { line: usize, reason: String },

    #[error("no neutral form available for `{0}`")]
    MissingNeutralForm(String),

    #[error("invalid scorer query: {0}")]
    InvalidQuery(String),

    #[error("scorer protocol error: {0}")]
    Protocol(String),

    #[error("scorer response omitted candidate `{0}`")]
    CandidateMissing(String),

    #[error("scorer refused to register `{0}` as a single token")]
    ExtensionRefused(String),

    #[error("requested {k} samples but only {available} are eligible")]
    InsufficientSamples { k: usize, available: usize },

    #[error("benchmark contains no instances")]
    EmptyBenchmark,

    #[error("malformed benchmark: {0}")]
    MalformedBenchmark(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures that originate in the scorer transport or its replies.
    pub fn is_protocol(&self) -> bool {
        matches!(
            self,
            Error::Protocol(_) | Error::CandidateMissing(_) | Error::ExtensionRefused(_)
        )
    }
}
