use ndarray::{ArrayD, Axis, IxDyn, Slice};

use crate::autograd::OpNode;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{output, sum_axes};

/// Numpy broadcast result of two shapes, or `None` when incompatible.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = if da == db || db == 1 {
            da
        } else if da == 1 {
            db
        } else {
            return None;
        };
    }
    Some(out)
}

struct BroadcastOp<T: Scalar> {
    x: Tensor<T>,
    target: Vec<usize>,
}

impl<T: Scalar> OpNode<T> for BroadcastOp<T> {
    fn name(&self) -> &'static str {
        "broadcast_to"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.x.clone()]
    }
    fn vjp(&self, _out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![needs[0].then(|| {
            let extra = self.target.len() - self.x.ndim();
            let mut g = grad.clone();
            if extra > 0 {
                let lead: Vec<usize> = (0..extra).collect();
                g = sum_axes(&g, &lead, false);
            }
            let expanded: Vec<usize> = self
                .x
                .shape()
                .iter()
                .enumerate()
                .filter(|&(i, &d)| d == 1 && self.target[extra + i] != 1)
                .map(|(i, _)| i)
                .collect();
            if !expanded.is_empty() {
                g = sum_axes(&g, &expanded, true);
            }
            g
        })]
    }
}

/// Right-aligned numpy-style broadcast to `target`.
pub fn broadcast_to<T: Scalar>(x: &Tensor<T>, target: &[usize]) -> Tensor<T> {
    if x.shape() == target {
        return x.clone();
    }
    let data: ArrayD<T> = x
        .data()
        .broadcast(IxDyn(target))
        .unwrap_or_else(|| {
            panic!(
                "broadcast_to: cannot broadcast {:?} to {:?}",
                x.shape(),
                target
            )
        })
        .to_owned();
    output(
        data,
        BroadcastOp {
            x: x.clone(),
            target: target.to_vec(),
        },
    )
}

struct ReshapeOp<T: Scalar> {
    x: Tensor<T>,
}

impl<T: Scalar> OpNode<T> for ReshapeOp<T> {
    fn name(&self) -> &'static str {
        "reshape"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.x.clone()]
    }
    fn vjp(&self, _out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![needs[0].then(|| reshape(grad, self.x.shape()))]
    }
}

/// Row-major reshape; element count must be preserved.
pub fn reshape<T: Scalar>(x: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    let n: usize = shape.iter().product();
    assert_eq!(
        n,
        x.len(),
        "reshape: {:?} -> {:?} changes element count",
        x.shape(),
        shape
    );
    if x.shape() == shape {
        return x.clone();
    }
    let data = x
        .data()
        .clone()
        .into_shape_with_order(IxDyn(shape))
        .expect("reshape of standard-layout data");
    output(data, ReshapeOp { x: x.clone() })
}

struct PermuteOp<T: Scalar> {
    x: Tensor<T>,
    axes: Vec<usize>,
}

impl<T: Scalar> OpNode<T> for PermuteOp<T> {
    fn name(&self) -> &'static str {
        "permute"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.x.clone()]
    }
    fn vjp(&self, _out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![needs[0].then(|| {
            let mut inverse = vec![0usize; self.axes.len()];
            for (i, &a) in self.axes.iter().enumerate() {
                inverse[a] = i;
            }
            permute(grad, &inverse)
        })]
    }
}

/// Axis permutation (generalized transpose).
pub fn permute<T: Scalar>(x: &Tensor<T>, axes: &[usize]) -> Tensor<T> {
    assert_eq!(axes.len(), x.ndim(), "permute: axes {:?} for shape {:?}", axes, x.shape());
    let mut check: Vec<usize> = axes.to_vec();
    check.sort_unstable();
    assert!(
        check.iter().enumerate().all(|(i, &a)| i == a),
        "permute: {:?} is not a permutation",
        axes
    );
    let data = x.data().clone().permuted_axes(IxDyn(axes));
    output(
        data.as_standard_layout().to_owned(),
        PermuteOp {
            x: x.clone(),
            axes: axes.to_vec(),
        },
    )
}

struct ConcatOp<T: Scalar> {
    parts: Vec<Tensor<T>>,
    axis: usize,
}

impl<T: Scalar> OpNode<T> for ConcatOp<T> {
    fn name(&self) -> &'static str {
        "concat"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        self.parts.clone()
    }
    fn vjp(&self, _out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        let mut offset = 0usize;
        let mut grads = Vec::with_capacity(self.parts.len());
        for (part, need) in self.parts.iter().zip(needs) {
            let len = part.shape()[self.axis];
            grads.push(need.then(|| narrow(grad, self.axis, offset, len)));
            offset += len;
        }
        grads
    }
}

/// Concatenation along `axis`; all other dims must agree.
pub fn concat<T: Scalar>(parts: &[Tensor<T>], axis: usize) -> Tensor<T> {
    assert!(!parts.is_empty(), "concat of zero tensors");
    let first = &parts[0];
    assert!(axis < first.ndim(), "concat: axis {} for shape {:?}", axis, first.shape());
    for p in parts {
        assert_eq!(p.ndim(), first.ndim(), "concat: rank mismatch");
        for d in 0..first.ndim() {
            if d != axis {
                assert_eq!(
                    p.shape()[d],
                    first.shape()[d],
                    "concat: dim {} mismatch between {:?} and {:?}",
                    d,
                    p.shape(),
                    first.shape()
                );
            }
        }
    }
    let borrowed: Vec<_> = parts.iter().map(|p| p.data()).collect();
    let views: Vec<_> = borrowed.iter().map(|d| d.view()).collect();
    let data = ndarray::concatenate(Axis(axis), &views).expect("concat shapes pre-checked");
    output(
        data,
        ConcatOp {
            parts: parts.to_vec(),
            axis,
        },
    )
}

struct NarrowOp<T: Scalar> {
    x: Tensor<T>,
    axis: usize,
    start: usize,
}

impl<T: Scalar> OpNode<T> for NarrowOp<T> {
    fn name(&self) -> &'static str {
        "narrow"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.x.clone()]
    }
    fn vjp(&self, _out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![needs[0].then(|| embed(grad, self.axis, self.start, self.x.shape()))]
    }
}

/// Contiguous slice of length `len` starting at `start` along `axis`.
pub fn narrow<T: Scalar>(x: &Tensor<T>, axis: usize, start: usize, len: usize) -> Tensor<T> {
    assert!(axis < x.ndim(), "narrow: axis {} for shape {:?}", axis, x.shape());
    assert!(
        start + len <= x.shape()[axis],
        "narrow: [{start}, {start}+{len}) out of range on axis {axis} of {:?}",
        x.shape()
    );
    let data = x
        .data()
        .slice_axis(Axis(axis), Slice::from(start..start + len))
        .to_owned();
    output(
        data,
        NarrowOp {
            x: x.clone(),
            axis,
            start,
        },
    )
}

struct EmbedOp<T: Scalar> {
    x: Tensor<T>,
    axis: usize,
    start: usize,
}

impl<T: Scalar> OpNode<T> for EmbedOp<T> {
    fn name(&self) -> &'static str {
        "embed"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.x.clone()]
    }
    fn vjp(&self, _out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![needs[0].then(|| narrow(grad, self.axis, self.start, self.x.shape()[self.axis]))]
    }
}

/// Adjoint of `narrow`: places `x` into a zero tensor of shape `full` at
/// `start` along `axis`.
fn embed<T: Scalar>(x: &Tensor<T>, axis: usize, start: usize, full: &[usize]) -> Tensor<T> {
    let len = x.shape()[axis];
    let mut data = ArrayD::<T>::zeros(IxDyn(full));
    data.slice_axis_mut(Axis(axis), Slice::from(start..start + len))
        .assign(&x.data());
    output(
        data,
        EmbedOp {
            x: x.clone(),
            axis,
            start,
        },
    )
}
