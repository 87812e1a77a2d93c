mod activation;
mod conv;
mod elementwise;
mod matmul;
mod pool;
mod reduce;
mod shape;
mod softmax;

pub use activation::{dropout, leaky_relu, relu};
pub use conv::{conv2d, Padding};
pub use elementwise::{
    add, add_scalar, addb, div, divb, exp, ln, mul, mul_scalar, mulb, neg, powf_const, sqrt_eps,
    square, sub, subb, tanh,
};
pub use matmul::matmul;
pub use pool::{avg_pool2, global_avg_pool, max_pool2, sum_pool2, upsample_nearest2};
pub use reduce::{mean_all, mean_axes, sum_all, sum_axes};
pub use shape::{broadcast_shape, broadcast_to, concat, narrow, permute, reshape};
pub use softmax::{cross_entropy, log_softmax, mse, softmax};

use crate::autograd::OpNode;
use crate::scalar::Scalar;
use crate::tensor::{grad_enabled, Tensor};
use ndarray::ArrayD;

/// Wraps forward output, recording `op` only when the tape is live and some
/// input participates in it.
pub(crate) fn output<T: Scalar>(
    data: ArrayD<T>,
    op: impl OpNode<T> + 'static,
) -> Tensor<T> {
    let tracked = grad_enabled() && op.inputs().iter().any(|t| t.requires_grad());
    if tracked {
        Tensor::from_op(data, Box::new(op))
    } else {
        Tensor::from_array(data)
    }
}

pub(crate) fn assert_same_shape<T: Scalar>(op: &str, a: &Tensor<T>, b: &Tensor<T>) {
    assert_eq!(
        a.shape(),
        b.shape(),
        "{op}: operand shapes {:?} vs {:?}",
        a.shape(),
        b.shape()
    );
}
