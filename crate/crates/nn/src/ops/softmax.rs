use ndarray::Axis;

use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{
    broadcast_to, exp, ln, mean_all, mul, mul_scalar, neg, square, sub, sum_all, sum_axes,
};

/// Numerically stable `log(softmax(x))` along `axis`. The row maximum is
/// subtracted as a constant; its gradient contribution is exactly zero, so
/// detaching it leaves the derivative intact.
pub fn log_softmax<T: Scalar>(x: &Tensor<T>, axis: usize) -> Tensor<T> {
    assert!(axis < x.ndim(), "log_softmax: axis {axis} for shape {:?}", x.shape());
    let rowmax = {
        let data = x.data();
        let mut m = data.map_axis(Axis(axis), |lane| {
            lane.iter().copied().fold(T::neg_infinity(), T::max)
        });
        m = m.insert_axis(Axis(axis));
        Tensor::from_array(m.into_dyn().as_standard_layout().to_owned())
    };
    let shifted = sub(x, &broadcast_to(&rowmax, x.shape()));
    let lse = ln(&sum_axes(&exp(&shifted), &[axis], true));
    sub(&shifted, &broadcast_to(&lse, x.shape()))
}

pub fn softmax<T: Scalar>(x: &Tensor<T>, axis: usize) -> Tensor<T> {
    exp(&log_softmax(x, axis))
}

/// Mean negative log-likelihood of `labels` under `softmax(logits)`;
/// `logits` is `[B, K]`, one label per row.
pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<Tensor<T>> {
    if logits.ndim() != 2 {
        return Err(NnError::InvalidArg {
            op: "cross_entropy",
            msg: format!("logits must be [B,K], got {:?}", logits.shape()),
        });
    }
    let (b, k) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != b {
        return Err(NnError::DimMismatch {
            op: "cross_entropy",
            axis: "batch",
            expected: b,
            got: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(NnError::InvalidArg {
            op: "cross_entropy",
            msg: format!("label {bad} out of range for {k} classes"),
        });
    }
    let mut onehot = vec![T::zero(); b * k];
    for (row, &l) in labels.iter().enumerate() {
        onehot[row * k + l] = T::one();
    }
    let onehot = Tensor::from_vec(&[b, k], onehot);
    let picked = sum_all(&mul(&log_softmax(logits, 1), &onehot));
    Ok(mul_scalar(&neg(&picked), T::cast(1.0 / b as f64)))
}

/// Mean squared error between same-shape tensors.
pub fn mse<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    mean_all(&square(&sub(a, b)))
}
