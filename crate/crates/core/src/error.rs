use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error(
        "invalid family descriptor `{0}`: expected `sphere` or `power:a=<decimal>:m=<decimal>`"
    )]
    FamilyKey(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} = {value} outside domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("path {path} exceeded the step budget of {budget} steps")]
    StepBudget { path: u64, budget: u64 },

    #[error("table cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn domain(what: &'static str, value: f64, domain: impl Into<String>) -> LabError {
    LabError::Domain {
        what,
        value,
        domain: domain.into(),
    }
}
