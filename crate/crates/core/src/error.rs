use thiserror::Error;

pub type Result<T> = std::result::Result<T, MomentaError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentaError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid objective: {0}")]
    InvalidObjective(String),

    #[error("invalid oracle: {0}")]
    InvalidOracle(String),

    #[error("invalid block policy: {0}")]
    InvalidBlockPolicy(String),

    /// A hard violation of the parameter box constraints.
    #[error("parameter bound violated: {bound} ({detail})")]
    ParamBound { bound: &'static str, detail: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite objective value at query point {point:?}")]
    NonFiniteValue { point: Vec<f64> },

    #[error("trajectory diverged at step {t}")]
    Divergence { t: u64 },

    #[error("negative synthetic step size at t = {t} (eta = {eta})")]
    NegativeSyntheticStep { t: u64, eta: f64 },

    #[error("hypothesis violation: {0}")]
    Hypothesis(String),

    #[error("unknown {kind} '{name}' (registered: {known})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
