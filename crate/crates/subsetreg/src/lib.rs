//! Best-subset selection for multiple linear regression.
//!
//! The crate optimizes the mean absolute error (MAE) or mean squared error
//! (MSE) of a regression model jointly over the choice of explanatory
//! variables and their coefficients. For the thin case (fewer variables than
//! observations) the problem is written as a mixed integer program and solved
//! exactly by an LP-based branch-and-bound built on an in-house two-phase
//! primal simplex. For the fat case (more variables than observations) the
//! penalized objectives `MAE_a`/`MSE_a` are used together with a cardinality
//! cap, and core-set heuristics provide good solutions quickly.
//!
//! Entry points:
//! * [`dataset::Instance`] — data loading, generation, summary statistics.
//! * [`branch_and_bound::solve_mip`] — the exact engine.
//! * [`heuristics`] — stepwise, core-set, and randomized core-set searches.
//! * [`bench`] — the benchmark harness behind the `subsetreg bench` command.

pub mod bench;
pub mod big_m;
pub mod branch_and_bound;
pub mod dataset;
pub mod heuristics;
pub mod linalg;
pub mod lp_solver;
pub mod mip_models;
pub mod objectives;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("csv parse error at row {row}, column {col}: {msg}")]
    CsvParse { row: usize, col: usize, msg: String },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("singular system for subset {subset:?}")]
    SingularSystem { subset: Vec<usize> },
    #[error("cardinality {p} exceeds limit {max}")]
    Cardinality { p: usize, max: usize },
    #[error("LP numeric failure: {0}")]
    LpNumeric(String),
    #[error("inconsistent big-M values: {0}")]
    InconsistentBigM(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("csv write error: {0}")]
    CsvWrite(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
