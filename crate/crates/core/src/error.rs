//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty text")]
    EmptyText,

    #[error("token id {0} out of vocab range (size {1})")]
    TokenIdOutOfRange(u32, usize),

    #[error("vocab error: {0}")]
    Vocab(String),

    #[error("malformed line {line}: {msg}")]
    MalformedLine { line: usize, msg: String },

    #[error("corruption probabilities sum to {0}, must be <= 1")]
    CorruptionProbSum(f64),

    #[error("label sequence length {got} does not match source length {want}")]
    LabelLengthMismatch { got: usize, want: usize },

    #[error("insertion point has no preceding token")]
    InsertionAtStart,

    #[error("edit script does not fit the sequence: {0}")]
    ScriptMismatch(String),

    #[error("expected {want} text pieces, got {got}")]
    PieceCountMismatch { want: usize, got: usize },

    #[error("merged labels are missing a gold edit: {0}")]
    MissingGoldEdit(String),

    #[error("sequence too long: {got} tokens exceeds max {max}")]
    SequenceTooLong { got: usize, max: usize },

    #[error("numerical overflow: non-finite {0}")]
    NumericalOverflow(String),

    #[error("probability {0} outside (0, 1]")]
    BadProbability(f64),

    #[error("malformed probability row: {0}")]
    BadProbabilityRow(String),

    #[error("no active tokens for {0} loss")]
    NoActiveTokens(&'static str),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty grid axis: {0}")]
    EmptyGridAxis(&'static str),

    #[error("empty dev set")]
    EmptyDevSet,

    #[error("training diverged at step {step}: {msg}")]
    Diverged { step: usize, msg: String },

    #[error("model mode {0} cannot run this operation")]
    WrongMode(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
