use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("inconsistent record at index {index}: {msg}")]
    InconsistentRecord { index: usize, msg: String },

    #[error("query quadruple {0:?} contains no unseen component")]
    NoUnseenComponent(crate::tkg::Quadruple),

    #[error("sampler error: {0}")]
    Sampler(String),

    #[error("cannot embed {kind} {id}: {msg}")]
    CannotEmbed {
        kind: &'static str,
        id: usize,
        msg: String,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("division by a zero-magnitude complex entry in {0}")]
    ZeroDivision(&'static str),

    #[error("empty query set")]
    EmptyQuery,

    #[error("no valid negative sample for quadruple {0:?}")]
    NoValidNegative(crate::tkg::Quadruple),

    #[error("non-finite loss at step {step}, task {task}")]
    NonFiniteLoss { step: usize, task: usize },

    #[error("zero-norm embedding for relation {0}")]
    ZeroNorm(usize),

    #[error("true entity not among candidates")]
    TruthNotCandidate,

    #[error("checkpoint vocabulary hash mismatch (checkpoint {found}, dataset {expected})")]
    VocabHashMismatch { found: String, expected: String },

    #[error("unknown score kind {0:?}")]
    UnknownScoreKind(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
