use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("generator must be square and non-empty, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("negative off-diagonal rate q[{row}][{col}] = {value}")]
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },
    #[error("row {row} of the generator sums to {sum}, expected 0")]
    NonzeroRowSum { row: usize, sum: f64 },
    #[error("non-finite rate q[{row}][{col}]")]
    NonFiniteRate { row: usize, col: usize },
    #[error("environment chain is reducible")]
    ReducibleChain,
    #[error("invalid state distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid problem ({context}): {message}")]
    Validation { context: String, message: String },
    #[error("no state has an absorbing face; exit times would be infinite")]
    NoAbsorbingFace,
    #[error("unknown example `{0}`")]
    UnknownExample(String),
    #[error("malformed problem config: {0}")]
    Config(#[from] serde_json::Error),

    #[error("system has {unknowns} unknowns, budget is {budget}")]
    MemoryBudgetExceeded { unknowns: usize, budget: usize },
    #[error("boundary rows of level {level} need the level {} field", level - 1)]
    MissingLowerLevel { level: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("linear system is singular")]
    SingularSystem,
    #[error("iterative solve stalled after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("eigenvalue iteration did not converge")]
    EigsNoConvergence,
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("Monte Carlo batch is empty")]
    EmptyBatch,
    #[error("{censored} of {total} paths were censored at the horizon; increase the horizon")]
    ExcessCensoring { censored: usize, total: usize },
    #[error("invalid simulation settings: {0}")]
    Settings(String),
}

impl Error {
    pub(crate) fn validation(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            context: context.into(),
            message: message.into(),
        }
    }
}
