use ndarray::{ArrayD, Axis, IxDyn};

use crate::autograd::OpNode;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{broadcast_to, mul_scalar, output, reshape};

struct SumAllOp<T: Scalar> {
    x: Tensor<T>,
}

impl<T: Scalar> OpNode<T> for SumAllOp<T> {
    fn name(&self) -> &'static str {
        "sum_all"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.x.clone()]
    }
    fn vjp(&self, _out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![needs[0].then(|| broadcast_to(grad, self.x.shape()))]
    }
}

/// Sum of all elements as a rank-0 tensor.
pub fn sum_all<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.data().iter().copied().fold(T::zero(), |acc, v| acc + v);
    output(
        ArrayD::from_elem(IxDyn(&[]), s),
        SumAllOp { x: x.clone() },
    )
}

pub fn mean_all<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let n = x.len();
    assert!(n > 0, "mean_all on empty tensor");
    mul_scalar(&sum_all(x), T::cast(1.0 / n as f64))
}

struct SumAxesOp<T: Scalar> {
    x: Tensor<T>,
    axes: Vec<usize>,
    keepdims: bool,
}

impl<T: Scalar> OpNode<T> for SumAxesOp<T> {
    fn name(&self) -> &'static str {
        "sum_axes"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.x.clone()]
    }
    fn vjp(&self, _out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![needs[0].then(|| {
            let g = if self.keepdims {
                grad.clone()
            } else {
                let mut kshape = self.x.shape().to_vec();
                for &a in &self.axes {
                    kshape[a] = 1;
                }
                reshape(grad, &kshape)
            };
            broadcast_to(&g, self.x.shape())
        })]
    }
}

/// Sum over the given axes. With `keepdims` the reduced axes stay as size-1
/// dims, which keeps the result broadcastable against the input.
pub fn sum_axes<T: Scalar>(x: &Tensor<T>, axes: &[usize], keepdims: bool) -> Tensor<T> {
    assert!(!axes.is_empty(), "sum_axes: empty axis list");
    let mut axes = axes.to_vec();
    axes.sort_unstable();
    axes.dedup();
    assert!(
        *axes.last().unwrap() < x.ndim(),
        "sum_axes: axis out of range for shape {:?}",
        x.shape()
    );
    let mut data = x.data().clone();
    // Reduce from the highest axis down so earlier indices stay valid.
    for &a in axes.iter().rev() {
        data = data.sum_axis(Axis(a));
    }
    if keepdims {
        let mut kshape = x.shape().to_vec();
        for &a in &axes {
            kshape[a] = 1;
        }
        data = data.into_shape_with_order(IxDyn(&kshape)).unwrap();
    }
    output(
        data,
        SumAxesOp {
            x: x.clone(),
            axes,
            keepdims,
        },
    )
}

pub fn mean_axes<T: Scalar>(x: &Tensor<T>, axes: &[usize], keepdims: bool) -> Tensor<T> {
    let n: usize = axes.iter().map(|&a| x.shape()[a]).product();
    assert!(n > 0, "mean_axes over empty axes");
    mul_scalar(&sum_axes(x, axes, keepdims), T::cast(1.0 / n as f64))
}
