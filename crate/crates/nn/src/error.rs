use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    /// A single named axis disagrees between two operands.
    #[error("{op}: {axis} mismatch: expected {expected}, got {got}")]
    DimMismatch {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{op}: shape mismatch: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: {msg}")]
    InvalidArg { op: &'static str, msg: String },

    #[error("batch renorm needs a batch of at least 2 samples in training mode, got {batch}")]
    DegenerateBatch { batch: usize },

    #[error("non-finite gradient for parameter `{name}`")]
    NonFiniteGrad { name: String },

    #[error("non-finite value while probing input `{input}` at flat index {index}")]
    NonFiniteProbe { input: String, index: usize },

    #[error("no gradient path from the loss to `{name}`")]
    NoGradPath { name: String },
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;
