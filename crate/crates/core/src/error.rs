use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("history is empty")]
    EmptyHistory,

    #[error("cannot aggregate an empty list of scores")]
    EmptyScores,

    #[error("score {0} is outside [0, 1]")]
    ScoreOutOfRange(f64),

    #[error("duplicate exemplar id `{0}`")]
    DuplicateId(String),

    #[error("sequence repeats exemplar index {0}")]
    RepeatedExemplar(usize),

    #[error("sequence length {got} does not match the configured k = {expected}")]
    SequenceLength { expected: usize, got: usize },

    #[error("unresolved exemplar reference `{0}`")]
    UnresolvedId(String),

    #[error("unresolved instruction reference {0}")]
    UnresolvedInstruction(usize),

    #[error("invalid exemplar `{id}`: {reason}")]
    InvalidExemplar { id: String, reason: String },

    #[error("validation set is empty")]
    EmptyValidation,

    #[error("validation item `{0}` also appears in the pool")]
    ValidationOverlap(String),

    #[error("instruction set is empty")]
    EmptyInstructions,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("infeasible transport problem: {0}")]
    Infeasible(String),

    #[error("empty candidate list")]
    EmptyCandidates,

    #[error("inverse design matrix lost positive-definiteness; refactorization needed")]
    NotPositiveDefinite,

    #[error("training diverged: loss became non-finite at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed oracle parameters: {0}")]
    OracleParams(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("non-numeric input `{0}`")]
    NonNumeric(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("scorer failed: {0}")]
    Scorer(String),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("corrupt ledger line {line}: {reason}")]
    CorruptLedger { line: usize, reason: String },

    #[error("{0}")]
    Resume(String),

    #[error("stopped after {0} new evaluations")]
    Interrupted(usize),

    #[error("invalid cache file: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, reason: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            reason: reason.to_string(),
        }
    }
}
