//! Independent verification: finite differences, limiting gradients, Clarke
//! hull membership, exact piece gradients, a Lipschitz probe and the naive
//! fixed-convention baseline.

mod check;
mod exact;
mod fd;
mod hull;
mod lipschitz;
mod naive;

use thiserror::Error;

pub use check::{run_check, CheckEngine, CheckOptions, CheckReport, CheckRow, CheckStatus, EngineOutput};
pub use exact::{exact_piece_gradient, ExactSelection, ProgramPieces};
pub use fd::{
    extrapolate, fd_directional, limiting_gradient, FdArithmetic, FdEstimate, FdSchedule,
    LimitingGradient,
};
pub use hull::{
    clarke_hull_check, hull_distance, hull_vertices, min_norm_point, HullOptions, HullVerdict,
    HullVertices, MAX_HULL_DIM,
};
pub use lipschitz::{lipschitz_probe, LipschitzReport, LipschitzWitness};
pub use naive::{naive_ad, NaiveConvention};

use crate::asd::AsdError;
use crate::graph::{EvalError, ExtractionError, PieceSelectError};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("step schedule must be nonempty, positive and strictly decreasing")]
    BadSchedule,
    #[error("expected dimension {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("every step landed on a kink")]
    NoValidSteps,
    #[error("internal inconsistency: {0}")]
    Inconsistent(String),
    #[error("hull checks support at most {limit} inputs, program has {found}")]
    TooManyInputs { found: usize, limit: usize },
    #[error("{found} directions requested, at least {needed} required")]
    TooFewDirections { found: usize, needed: usize },
    #[error("no naive convention for library function {0:?}")]
    MissingConvention(String),
    #[error(transparent)]
    Extraction(#[from] ExtractionError),
    #[error(transparent)]
    PieceSelect(#[from] PieceSelectError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Asd(#[from] AsdError),
}
