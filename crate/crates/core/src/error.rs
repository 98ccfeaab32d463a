use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("enumeration budget exceeded: needs {needed} ops, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("unknown constraint id {0}")]
    UnknownConstraint(usize),

    #[error("variable {var} is not a neighbor of constraint {con}")]
    VariableNotInConstraint { var: usize, con: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("distribution length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty variable set")]
    EmptyVariableSet,

    #[error("conditioning event has zero mass")]
    ZeroMassEvent,

    #[error("coordinate index {index} out of range for arity {arity}")]
    CoordinateOutOfRange { index: usize, arity: usize },

    #[error(
        "restart cap of {0} exceeded while sampling percolated graph; parameters look infeasible"
    )]
    RestartCapExceeded(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed partition: {0}")]
    MalformedPartition(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
