use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter for {family}: {reason}")]
    InvalidParameter { family: &'static str, reason: String },

    #[error("invalid source family: {0}")]
    InvalidFamily(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("truncated stream at bit {at}: {context}")]
    TruncatedStream { at: usize, context: &'static str },

    #[error("malformed stream at bit {at}: {reason}")]
    MalformedStream { at: usize, reason: String },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("training set is empty")]
    EmptyTraining,

    #[error("training block {block} contains a non-finite value")]
    NonFiniteTraining { block: usize },

    #[error("operation not supported for family {0}")]
    UnsupportedFamily(&'static str),

    #[error("need at least {needed} candidates, got {got}")]
    TooFewCandidates { needed: usize, got: usize },

    #[error("invalid candidate set: {0}")]
    InvalidCandidates(String),

    #[error("invalid scheme configuration: {0}")]
    InvalidConfig(String),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
