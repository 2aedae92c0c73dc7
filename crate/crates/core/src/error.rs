use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse grouping used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Divergence,
    Io,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Validation => "validation",
            ErrorCategory::Divergence => "divergence",
            ErrorCategory::Io => "io",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("row {row} is not stochastic: sums to {sum}")]
    NotStochastic { row: String, sum: f64 },

    #[error("induced chain is not irreducible: state {state} cannot reach or be reached from state 0")]
    NotIrreducible { state: usize },

    #[error("induced chain is periodic with period {period}")]
    NotAperiodic { period: usize },

    #[error("linear system is singular: {0}")]
    SingularSystem(String),

    #[error("feature matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("feature row {state} has squared norm {norm_sq} > 1")]
    FeatureNormExceeded { state: usize, norm_sq: f64 },

    #[error("matrix A is singular; the feature or chain assumptions are violated upstream")]
    SingularA,

    #[error("agent {agent} diverged at step {step}: |theta| = {norm:e}")]
    Divergence { agent: usize, step: usize, norm: f64 },

    #[error("step size {alpha} exceeds the compliant maximum {max}")]
    NonCompliantAlpha { alpha: f64, max: f64 },

    #[error("horizon {horizon} is shorter than the required minimum {min}")]
    HorizonTooShort { horizon: usize, min: f64 },

    #[error("schedule is not theorem-compliant: {0}")]
    NonCompliantSchedule(String),

    #[error("weight matrix is not doubly stochastic (max deviation {deviation:e})")]
    NotDoublyStochastic { deviation: f64 },

    #[error("weight matrix has a positive entry ({row}, {col}) off the graph")]
    WeightOffGraph { row: usize, col: usize },

    #[error("no connected graph after {attempts} attempts")]
    GenerationFailed { attempts: usize },

    #[error("consensus cannot make progress: contraction factor {contraction}")]
    NoProgress { contraction: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Divergence { .. } => ErrorCategory::Divergence,
            Error::Io(_) => ErrorCategory::Io,
            _ => ErrorCategory::Validation,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }
}
