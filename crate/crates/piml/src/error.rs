//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value produced at tape node {node}")]
    NonFinite { node: usize },
    #[error("non-finite loss at epoch {epoch}{}", worker.map(|w| format!(" (subdomain {w})")).unwrap_or_default())]
    NonFiniteLoss { epoch: usize, worker: Option<usize> },
    #[error("derivative order {order} exceeds the supported maximum of {max}")]
    OrderOverflow { order: usize, max: usize },
    #[error("empty point set: {0}")]
    EmptySet(String),
    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),
    #[error("point outside domain: {0:?}")]
    OutsideDomain(Vec<f64>),
    #[error("parameter {0} is not registered on the tape")]
    ParamNotOnTape(usize),
    #[error("loss node is not scalar-valued")]
    LossNotScalar,
    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("rank-deficient least-squares system (rank {rank} < {cols} unknowns)")]
    RankDeficient { rank: usize, cols: usize },
    #[error("unidentifiable fit: {0}")]
    Unidentifiable(String),
    #[error("compatibility violated: source terms sum to {0:e}, expected 0")]
    Incompatible(f64),
    #[error("Newton iteration failed to converge within {0} iterations")]
    NewtonDiverged(usize),
    #[error("matrix is singular")]
    Singular,
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
