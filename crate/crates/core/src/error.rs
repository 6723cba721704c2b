use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("action {action} is infeasible in state {state}")]
    InfeasibleAction { state: String, action: String },

    #[error("value table did not converge (span {span:e} > tol {tol:e})")]
    NotConverged { span: f64, tol: f64 },

    #[error("policy violates the threshold structure; thresholds are undefined")]
    StructureViolated,

    #[error("artifact {path}: {msg}")]
    Artifact { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
