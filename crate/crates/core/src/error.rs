use thiserror::Error;

use crate::progeny::TypeIndex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("type {index} is outside the type set (first type is {first})")]
    InvalidType { index: TypeIndex, first: TypeIndex },
    #[error("probability {0} is not in [0,1]")]
    InvalidProbability(f64),
    #[error("law probabilities sum to {0}, expected 1")]
    ProbabilitySum(f64),
    #[error("invalid offspring vector: {0}")]
    InvalidOffspring(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("cannot parse model: {0}")]
    Parse(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no convergence after {iterations} iterations (last step {last_step:e})")]
    NonConvergence {
        iterations: usize,
        last_step: f64,
        last: Vec<f64>,
    },
    #[error("singular Jacobian at Newton iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("warm-started solution differs from the cold-start minimal fixed point by {gap:e}")]
    NotMinimal { gap: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix entry ({row},{col}) = {value} is negative or not finite")]
    BadEntry { row: usize, col: usize, value: f64 },
    #[error("matrix is reducible: indices {unreachable:?} are not strongly connected to index 0")]
    Reducible { unreachable: Vec<usize> },
    #[error("spectral radius iteration did not converge (last estimate {estimate}, bracket width {width:e})")]
    NonConvergence { estimate: f64, width: f64 },
    #[error("index {index} out of range for dimension {dim}")]
    Index { index: usize, dim: usize },
    #[error("{0}")]
    Unsupported(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("level k = {0} was not simulated")]
    UnknownLevel(TypeIndex),
    #[error("replay source has no {0}")]
    MissingReplay(String),
}
