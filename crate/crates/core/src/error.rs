//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid grouping: {0}")]
    InvalidGrouping(String),

    #[error("edit {index} ({description}) is invalid: {reason}")]
    InvalidEdit {
        index: usize,
        description: String,
        reason: String,
    },

    #[error(
        "suppression solution infeasible: block {block} disagrees on unsuppressed column e{column}"
    )]
    InfeasibleSuppression { block: usize, column: u32 },

    #[error("script does not make block {block} uniform")]
    NonUniformBlock { block: usize },

    #[error("dataset has {n} records but k = {k} requires at least k")]
    TooFewRecords { n: usize, k: usize },

    #[error("dataset has {n} records; exact enumeration is limited to {max}")]
    DatasetTooLarge { n: usize, max: usize },

    #[error("minhash requires a non-empty set (record {0})")]
    EmptySet(String),

    #[error("keyword LSH requires a non-empty keyword")]
    EmptyKeyword,

    #[error("session events are not time-ordered at position {index}")]
    UnorderedSession { index: usize },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("anonymity verification failed: {0}")]
    VerificationFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
