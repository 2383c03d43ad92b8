use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state space exceeds the cap of {cap} states")]
    StateCapExceeded { cap: usize },

    #[error("assumption {number} violated: {detail}")]
    AssumptionViolation { number: u8, detail: String },

    #[error("T0 is singular (smallest pivot {pivot:e})")]
    SingularT0 { pivot: f64 },

    #[error("A1 is singular")]
    A1Singular,

    #[error("null space of {what} has dimension {nullity}, expected 1")]
    NullityNotOne { what: &'static str, nullity: usize },

    #[error("inconsistent linear system in {context}: residual {residual:e}")]
    Inconsistent { context: String, residual: f64 },

    #[error("state {state} cannot reach the target set")]
    DisconnectedFromB { state: usize },

    #[error("singular system in {context} (condition estimate {cond:e})")]
    Singular { context: String, cond: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::InvalidNetwork(_)
            | Error::InvalidArgument(_)
            | Error::StateCapExceeded { .. }
            | Error::Dimension(_)
            | Error::Io(_) => 2,
            Error::AssumptionViolation { .. }
            | Error::NullityNotOne { .. }
            | Error::DisconnectedFromB { .. } => 3,
            Error::SingularT0 { .. }
            | Error::A1Singular
            | Error::Inconsistent { .. }
            | Error::Singular { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
