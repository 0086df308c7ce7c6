use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("task {id}: {reason}")]
    InvalidTask { id: u32, reason: String },

    #[error("duplicate task id {0}")]
    DuplicateId(u32),

    #[error("index {index} out of range {lo}..={hi}")]
    IndexOutOfRange { index: usize, lo: usize, hi: usize },

    #[error("empty task system")]
    EmptySystem,

    /// The requested speed (or the speed a method needs) exceeds `s_max = 1`.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid power model: {0}")]
    InvalidPowerModel(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    #[error("malformed arrival sequence: {0}")]
    MalformedArrivals(String),

    #[error("hyperperiod {hyperperiod} exceeds the simulation budget {budget}")]
    HyperperiodBudget { hyperperiod: String, budget: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid rational literal {0:?}")]
    ParseRational(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
