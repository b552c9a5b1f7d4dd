use thiserror::Error;

/// Errors raised by the simulation, parsing and analysis layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown unit `{unit}` at line {line}, column {column}")]
    UnknownUnit {
        unit: String,
        line: usize,
        column: usize,
    },

    #[error("negative duration {value} s at line {line}, column {column}")]
    NegativeDuration { value: f64, line: usize, column: usize },

    #[error("invalid program: {0}")]
    InvalidProgram(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite detuning sample at index {0}")]
    NonFiniteSample(usize),

    #[error("simulation budget exceeded: {requested} member-steps requested, budget is {budget}")]
    BudgetExceeded { requested: u128, budget: u128 },

    #[error("unknown acquire label `{0}`")]
    UnknownLabel(String),

    #[error("levels {i} and {j} are degenerate at this field (gap {gap_hz:.3e} Hz below threshold)")]
    Degenerate { i: usize, j: usize, gap_hz: f64 },

    #[error("level index out of range: ({i}, {j})")]
    LevelIndex { i: usize, j: usize },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("rank-deficient fit: {0}")]
    RankDeficient(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
