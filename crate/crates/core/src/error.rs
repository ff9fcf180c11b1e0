use thiserror::Error;

/// Errors raised by mesh construction, assembly and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("mesh too fine to allocate: {0}")]
    Resource(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("mesh topology error: {0}")]
    Topology(String),
    #[error("boundary loop does not close: {0}")]
    OpenBoundary(String),
    #[error("arc-length parameter {s} outside [0, {perimeter})")]
    OutOfRange { s: f64, perimeter: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("infeasible problem: {0}")]
    Infeasible(String),
    #[error("line search failed: {0}")]
    LineSearch(String),
    #[error("solver did not converge: {0}")]
    NotConverged(String),
    #[error("region collision: {0}")]
    Collision(String),
    #[error("eigenpair was not solved for this region: {0}")]
    RegionMismatch(String),
    #[error("mesh is not a disk mesh")]
    NotDisk,
    #[error("internal error: {0}")]
    Internal(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
