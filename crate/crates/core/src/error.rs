use thiserror::Error;

use crate::point::Point;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("points must have at least one coordinate")]
    EmptyPoint,

    #[error("non-finite value in {what} at position {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid set: {0}")]
    InvalidSet(String),

    #[error("set index {index} out of range for a family of {len} sets")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid string plan: {0}")]
    InvalidPlan(String),

    #[error("invalid control schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A point that was required to lie in the intersection does not.
    #[error("point is not feasible: set {set} violated by {violation:e}")]
    Infeasible { set: usize, violation: f64 },

    #[error("set index {index} does not appear in any string of the plan")]
    NotCovered { index: usize },

    #[error("intersection projection did not reach tolerance after {iterations} sweeps (residual {residual:e})")]
    OracleDidNotConverge {
        best: Point,
        residual: f64,
        iterations: usize,
    },

    #[error("iterate became non-finite at k = {k}")]
    NonFiniteIterate { k: usize },

    #[error("iterate x^{k} was not recorded; rerun with record_every = 1")]
    MissingIterate { k: usize },

    #[error("set {index} is not a linear subspace")]
    NotSubspace { index: usize },

    #[error("wrong run mode: {0}")]
    WrongMode(String),

    #[error("run has not converged (residual {residual:e})")]
    NotConverged { residual: f64 },

    #[error("grid oracle: {0}")]
    Grid(String),

    #[error("inputs do not describe the same run: {0}")]
    Mismatch(String),
}
