use std::io;

use thiserror::Error;

/// Errors produced anywhere in the ranking pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no embeddings")]
    NoEmbeddings,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("embedding dimension {found} does not match expected {expected}")]
    DimMismatch { expected: usize, found: usize },

    #[error("unrepresentable term: {0:?}")]
    Unrepresentable(String),

    #[error("empty term")]
    EmptyTerm,

    #[error("invalid shape {0:?}")]
    InvalidShape(Vec<usize>),

    #[error("non-finite gradient in tensor {0}")]
    NonFiniteGradient(String),

    #[error("non-finite loss")]
    NonFiniteLoss,

    #[error("non-finite similarity score")]
    NonFiniteScore,

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("invalid dropout probability {0}")]
    InvalidProbability(f64),

    #[error("encoder kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no feasible negative candidates")]
    NoNegatives,

    #[error("empty gold set for query {0:?}")]
    EmptyGold(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteGradient(_)
                | Error::NonFiniteLoss
                | Error::NonFiniteScore
                | Error::ZeroNorm
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
