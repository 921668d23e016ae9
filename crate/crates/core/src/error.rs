use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty token")]
    EmptyToken,
    #[error("token {0:?} contains whitespace")]
    InvalidToken(String),
    #[error("token count mismatch: {left} vs {right}")]
    TokenCountMismatch { left: usize, right: usize },
    #[error("token {position} differs beyond case")]
    NotCaseVariant { position: usize },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("corpus misaligned at line {line}: {reason}")]
    Alignment { line: usize, reason: String },
    #[error("model format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },
    #[error("ingestion rejected {rejected} of {total} sentences")]
    Rejected { rejected: usize, total: usize },
    #[error("system {system} failed: {reason}")]
    Bench { system: String, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
