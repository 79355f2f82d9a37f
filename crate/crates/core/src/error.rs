use thiserror::Error;

use crate::expr::ExprError;
use crate::fem::SolveError;
use crate::levelset::TraceError;
use crate::mesh::MeshError;

/// Any failure of the optimization pipeline, tagged by stage.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("expression: {0}")]
    Expr(#[from] ExprError),
    #[error("linear solve: {0}")]
    Solve(#[from] SolveError),
    #[error("orbit tracing: {0}")]
    Trace(#[from] TraceError),
    #[error("initial level set is not admissible: {}", .0.join("; "))]
    Admissibility(Vec<String>),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("comparison: {0}")]
    Compare(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
