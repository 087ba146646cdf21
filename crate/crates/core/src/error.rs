use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum OpgError {
    #[error("invalid ranking: {0}")]
    InvalidRanking(String),
    #[error("item sets differ between rankings")]
    ItemSetMismatch,
    #[error("ranking contains ties where a total order is required")]
    TiesPresent,
    #[error("ranking is not sorted consistently with the supplied scores")]
    InconsistentWithScores,
    #[error("non-finite score for item {0}")]
    NonFiniteScore(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("no ordinal feedback: {0}")]
    MissingOrdinal(String),
    #[error("no cardinal feedback: {0}")]
    MissingCardinal(String),
    #[error("unknown item id {0}")]
    UnknownItem(String),
    #[error("unknown grader id {0}")]
    UnknownGrader(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error(
        "grader {grader} ranks {size} items, above the score-weighted Mallows enumeration cap of {cap}; \
         exclude the mals model or raise the cap"
    )]
    EnumerationCapExceeded { grader: String, size: usize, cap: usize },
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("infeasible design: {0}")]
    Infeasible(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = OpgError> = std::result::Result<T, E>;

impl From<std::io::Error> for OpgError {
    fn from(e: std::io::Error) -> Self {
        OpgError::Io(e.to_string())
    }
}
