use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid distribution parameters: {0}")]
    InvalidDistribution(String),

    #[error("invalid CDF values: {0}")]
    InvalidCdf(String),

    #[error("outcome {y} outside [{a}, {b}]")]
    OutcomeOutOfRange { y: f64, a: f64, b: f64 },

    #[error("grid domain mismatch")]
    DomainMismatch,

    #[error("expected {expected} experts, got {actual}")]
    ExpertCountMismatch { expected: usize, actual: usize },

    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("all experts asleep: total confidence-weighted mass is zero")]
    AllExpertsAsleep,

    #[error("prediction for round {prediction} observed at round {state}")]
    RoundMismatch { prediction: u64, state: u64 },

    #[error("unknown expert {0}")]
    UnknownExpert(usize),

    #[error("empty ledger")]
    EmptyLedger,

    #[error("regret bounds are only certified without Fixed Share (alpha = {0})")]
    BoundScope(f64),
}
