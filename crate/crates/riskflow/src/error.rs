//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument shapes of a tape primitive do not conform.
    #[error("shape mismatch in `{op}`: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A reduction received an empty input.
    #[error("`{op}` requires a nonempty input")]
    EmptyInput { op: &'static str },

    /// `backward` was called on a non-scalar tensor.
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },

    /// A non-finite value surfaced where finiteness is required.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// Probabilities of a discrete distribution are invalid.
    #[error("invalid discrete distribution: {reason}")]
    InvalidDistribution { reason: String },

    /// Ratio expansion is undefined for a vanishing zeroth-order denominator.
    #[error("ratio expansion undefined: D0 == 0")]
    ZeroDenominator,

    /// Every remainder in a slope fit sits at the numerical floor.
    #[error("expansion exact, slope undefined")]
    ExpansionExact,

    /// Circular spread is undefined when the resultant length vanishes.
    #[error("undefined circular spread (zero resultant length)")]
    DegenerateCircularSpread,

    /// Paired metric inputs have different lengths.
    #[error("count mismatch in `{op}`: {lhs} vs {rhs}")]
    CountMismatch {
        op: &'static str,
        lhs: usize,
        rhs: usize,
    },

    /// Configuration file or value rejected.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Checkpoint file rejected.
    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),

    /// ODE integration produced a non-finite state.
    #[error("non-finite state at integration step {step}")]
    NonFiniteState { step: usize },

    /// Training aborted on a non-finite loss.
    #[error("non-finite loss at step {step} (lambda = {lambda})")]
    NonFiniteLoss { step: usize, lambda: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
