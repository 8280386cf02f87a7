use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("point lies outside the domain at every materialized resolution")]
    OutsideDomain,
    #[error("cell map stays unresolved down to level {level}")]
    ResolutionExhausted { level: usize },
    #[error("point is maximal; the forward map is not defined")]
    MaximalPoint,
    #[error("point is minimal; the backward map is not defined")]
    MinimalPoint,
    #[error("level mismatch: {0}")]
    LevelMismatch(String),
    #[error("bad cut levels: {0}")]
    BadCuts(String),
    #[error("return time exceeds the pigeonhole bound {0}")]
    LambdaUnbounded(usize),
    #[error("floor is split across base cells of the previous stage: {0}")]
    BrokenContainment(String),
    #[error("dom phi_1 is not dense in the union of domains at level {level}")]
    NotDense { level: usize },
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
