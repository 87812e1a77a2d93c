use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Element type for tensors: `f32` for training, `f64` for verification runs
/// such as finite-difference gradient checks.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssignOps
    + LinalgScalar
    + ScalarOperand
    + Sum<Self>
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    const DTYPE: &'static str;

    /// Lossy conversion from `f64`, used for literals and hyperparameters.
    fn cast(v: f64) -> Self {
        Self::from_f64(v).expect("f64 value not representable in scalar type")
    }

    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";

    fn as_f64(self) -> f64 {
        self
    }
}
