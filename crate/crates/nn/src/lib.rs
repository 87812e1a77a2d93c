//! Differentiable tensor primitives, layers, and Adam — the substrate every
//! network in this workspace is built on.
//!
//! The design is a dynamic tape: each op records the tensors it consumed and
//! how to push gradients back through itself. VJPs are themselves written in
//! terms of recorded ops, so gradients of gradients (as the critic's
//! gradient penalty requires) come out of the same machinery.
//!
//! Everything is generic over [`Scalar`]: `f32` for training, `f64` for
//! verification (finite-difference gradient checks run only there).

mod autograd;
mod error;
mod gradcheck;
pub mod layers;
pub mod ops;
mod optim;
pub mod rng;
mod scalar;
mod tensor;

pub use autograd::{backward, grad_wrt, reachable_leaves};
pub use error::{NnError, Result};
pub use gradcheck::{grad_check, GradCheckReport, InputReport};
pub use layers::{BatchRenorm, Conv2d, LayerNorm, Linear, EPSILON};
pub use optim::Adam;
pub use scalar::Scalar;
pub use tensor::{no_grad, NoGradGuard, Tensor};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
