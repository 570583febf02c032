//! Error type shared across the crate.

use crate::network::OpinionState;

/// Everything that can go wrong while validating inputs or running the
/// numerical routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A matrix was built from rows of unequal length.
    #[error("matrix is not square: row {row} has {len} entries, expected {expected}")]
    NonSquare {
        row: usize,
        len: usize,
        expected: usize,
    },

    /// Zero-size matrices carry no network.
    #[error("matrix is empty")]
    Empty,

    /// Trust weights must be non-negative.
    #[error("negative entry {value} at row {row}, column {col}")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    /// Every entry must be a finite number.
    #[error("non-finite entry at row {row}, column {col}")]
    NonFiniteEntry { row: usize, col: usize },

    /// A trust row summed to more than one beyond tolerance.
    #[error("row {row} sums to {sum}, which exceeds 1")]
    RowSumExceedsOne { row: usize, sum: f64 },

    /// An operation required a stochastic matrix but a row fell short of
    /// summing to one.
    #[error("row {row} sums to {sum}, expected exactly 1")]
    RowSumNotOne { row: usize, sum: f64 },

    /// The first row is not `(1, 0, ..., 0)`, so agent 0 is not stubborn.
    #[error("row 0 is not (1, 0, ..., 0): the first agent must trust only itself")]
    NotStubbornForm,

    /// An iteration hit its budget before meeting its tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// The DeGroot iteration hit its budget; the last state is preserved
    /// so callers can inspect how far it got.
    #[error("opinion iteration did not settle after {iterations} steps (last step moved {delta:.3e})")]
    IterationStalled {
        iterations: usize,
        delta: f64,
        last_state: Box<OpinionState>,
    },

    /// Gaussian elimination found no usable pivot.
    #[error("linear system is singular at elimination step {step}")]
    SingularSystem { step: usize },

    /// A solved system failed its residual check.
    #[error("solution residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },

    /// A structural hypothesis required by the computation does not hold.
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    /// Two containers that must agree in length do not.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A scalar parameter fell outside its admissible range.
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    /// Influence layers failed to reach every ordinary agent.
    #[error("agents {0:?} are unreachable from the stubborn agent")]
    IncompleteCoverage(Vec<usize>),

    /// A matrix power violated the row-sum contraction property.
    #[error("row-sum contraction fails at power {power}: row {row} sums to {sum}")]
    ContractionViolated { power: usize, row: usize, sum: f64 },

    /// A statistic was requested at a threshold the summary never tracked.
    #[error("threshold {0} was not among the tracked epsilon values")]
    EpsilonNotTracked(f64),

    /// A generator cannot satisfy its constraints at these parameters.
    #[error("infeasible network request: {0}")]
    Infeasible(String),
}
