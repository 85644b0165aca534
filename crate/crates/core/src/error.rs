use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no data")]
    NoData,
    #[error("alphabet violation: gene value {value} outside [1..{n}]")]
    AlphabetViolation { value: u32, n: u32 },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("not enough alive nodes: need {needed}, have {available}")]
    NotEnoughNodes { needed: usize, available: usize },
    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
