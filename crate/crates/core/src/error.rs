use thiserror::Error;

use crate::solver::SolveStatus;

#[derive(Debug, Error)]
pub enum HarsoError {
    #[error("duplicate name `{0}` in model")]
    DuplicateName(String),

    #[error("variable `{name}` has lower bound {lb} above upper bound {ub}")]
    InvalidBounds { name: String, lb: f64, ub: f64 },

    #[error("constraint `{constraint}` references unknown variable id {var}")]
    UnknownVariable { constraint: String, var: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid instance: {}", .0.join("; "))]
    InvalidInstance(Vec<String>),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("model `{model}` is infeasible: {detail}")]
    Infeasible { model: String, detail: String },

    #[error("model `{model}` is unbounded: {detail}")]
    Unbounded { model: String, detail: String },

    #[error("solver stopped on `{model}` with status {status:?}: {detail}")]
    Solver {
        model: String,
        status: SolveStatus,
        detail: String,
    },

    #[error("enumeration budget exceeded: {count} patterns per year (limit {limit})")]
    EnumerationBudget { count: u128, limit: u128 },

    #[error("ccg aborted at iteration {iteration}: {source}")]
    CcgAborted {
        iteration: usize,
        #[source]
        source: Box<HarsoError>,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HarsoError>;
