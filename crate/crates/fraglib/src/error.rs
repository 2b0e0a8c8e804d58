use crate::data::SystemModel;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix expression is not symmetric (max asymmetry {0:.3e})")]
    NonSymmetric(f64),

    #[error("expected a positive (semi)definite matrix: {0}")]
    NotPsd(String),

    #[error("duplicate variable name `{0}`")]
    DuplicateVar(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("problem infeasible: {0}")]
    Infeasible(String),

    #[error("data are not informative for quadratic stabilization")]
    NotInformative,

    #[error("closed loop is not Schur stable")]
    NotSchur,

    #[error("consistent set is a single system; use the model-based analysis on it")]
    SingletonData { recovered: Box<SystemModel> },

    #[error("consistent set is unbounded (rank of stacked data < n+m)")]
    UnboundedSet,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
