use std::rc::Rc;

use ndarray::{ArrayD, IxDyn};

use crate::autograd::OpNode;
use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{mean_axes, mul_scalar, output};

fn check_nchw<T: Scalar>(op: &'static str, x: &Tensor<T>) -> Result<()> {
    if x.ndim() != 4 {
        return Err(NnError::InvalidArg {
            op,
            msg: format!("expected 4-d NCHW input, got shape {:?}", x.shape()),
        });
    }
    Ok(())
}

fn check_even<T: Scalar>(op: &'static str, x: &Tensor<T>) -> Result<()> {
    check_nchw(op, x)?;
    let (h, w) = (x.shape()[2], x.shape()[3]);
    if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
        return Err(NnError::InvalidArg {
            op,
            msg: format!("2x2/stride-2 window needs even spatial dims, got {h}x{w}"),
        });
    }
    Ok(())
}

struct UpsampleOp<T: Scalar> {
    x: Tensor<T>,
}

impl<T: Scalar> OpNode<T> for UpsampleOp<T> {
    fn name(&self) -> &'static str {
        "upsample_nearest2"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.x.clone()]
    }
    fn vjp(&self, _out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![needs[0].then(|| sum_pool2(grad).expect("grad has even dims by construction"))]
    }
}

/// Nearest-neighbour 2x spatial upsampling of an NCHW tensor.
pub fn upsample_nearest2<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    check_nchw("upsample_nearest2", x)?;
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let mut out = vec![T::zero(); b * c * 4 * h * w];
    {
        let data = x.data();
        let src = data.as_slice().expect("standard layout");
        let (oh, ow) = (2 * h, 2 * w);
        for bc in 0..b * c {
            let sbase = bc * h * w;
            let dbase = bc * oh * ow;
            for i in 0..oh {
                let srow = sbase + (i / 2) * w;
                let drow = dbase + i * ow;
                for j in 0..ow {
                    out[drow + j] = src[srow + j / 2];
                }
            }
        }
    }
    let data = ArrayD::from_shape_vec(IxDyn(&[b, c, 2 * h, 2 * w]), out).unwrap();
    Ok(output(data, UpsampleOp { x: x.clone() }))
}

struct SumPool2Op<T: Scalar> {
    x: Tensor<T>,
}

impl<T: Scalar> OpNode<T> for SumPool2Op<T> {
    fn name(&self) -> &'static str {
        "sum_pool2"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.x.clone()]
    }
    fn vjp(&self, _out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![needs[0].then(|| upsample_nearest2(grad).expect("grad is 4-d by construction"))]
    }
}

/// 2x2 stride-2 window sum; spatial dims must be even.
pub fn sum_pool2<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    check_even("sum_pool2", x)?;
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![T::zero(); b * c * oh * ow];
    {
        let data = x.data();
        let src = data.as_slice().expect("standard layout");
        for bc in 0..b * c {
            let sbase = bc * h * w;
            let dbase = bc * oh * ow;
            for i in 0..oh {
                let r0 = sbase + 2 * i * w;
                let r1 = r0 + w;
                let drow = dbase + i * ow;
                for j in 0..ow {
                    let col = 2 * j;
                    out[drow + j] = src[r0 + col] + src[r0 + col + 1] + src[r1 + col] + src[r1 + col + 1];
                }
            }
        }
    }
    let data = ArrayD::from_shape_vec(IxDyn(&[b, c, oh, ow]), out).unwrap();
    Ok(output(data, SumPool2Op { x: x.clone() }))
}

/// 2x2 stride-2 average pooling.
pub fn avg_pool2<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(mul_scalar(&sum_pool2(x)?, T::cast(0.25)))
}

/// Spatial mean of an NCHW tensor: `[B,C,H,W] -> [B,C]`.
pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    check_nchw("global_avg_pool", x)?;
    Ok(mean_axes(x, &[2, 3], false))
}

struct MaxGatherOp<T: Scalar> {
    x: Tensor<T>,
    choices: Rc<Vec<u8>>,
}

impl<T: Scalar> OpNode<T> for MaxGatherOp<T> {
    fn name(&self) -> &'static str {
        "max_gather2"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.x.clone()]
    }
    fn vjp(&self, _out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![needs[0].then(|| max_scatter(grad, Rc::clone(&self.choices)))]
    }
}

struct MaxScatterOp<T: Scalar> {
    x: Tensor<T>,
    choices: Rc<Vec<u8>>,
}

impl<T: Scalar> OpNode<T> for MaxScatterOp<T> {
    fn name(&self) -> &'static str {
        "max_scatter2"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.x.clone()]
    }
    fn vjp(&self, _out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![needs[0].then(|| max_gather(grad, Rc::clone(&self.choices)))]
    }
}

/// Picks per-window elements according to `choices` (one of the four 2x2
/// positions per output cell). Linear for fixed choices, so it and its
/// adjoint `max_scatter` are exact mutual transposes.
fn max_gather<T: Scalar>(x: &Tensor<T>, choices: Rc<Vec<u8>>) -> Tensor<T> {
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![T::zero(); b * c * oh * ow];
    {
        let data = x.data();
        let src = data.as_slice().expect("standard layout");
        for bc in 0..b * c {
            let sbase = bc * h * w;
            let dbase = bc * oh * ow;
            for i in 0..oh {
                for j in 0..ow {
                    let didx = dbase + i * ow + j;
                    let ch = choices[didx] as usize;
                    let si = sbase + (2 * i + ch / 2) * w + 2 * j + ch % 2;
                    out[didx] = src[si];
                }
            }
        }
    }
    let data = ArrayD::from_shape_vec(IxDyn(&[b, c, oh, ow]), out).unwrap();
    output(data, MaxGatherOp { x: x.clone(), choices })
}

fn max_scatter<T: Scalar>(x: &Tensor<T>, choices: Rc<Vec<u8>>) -> Tensor<T> {
    let (b, c, oh, ow) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (h, w) = (2 * oh, 2 * ow);
    let mut out = vec![T::zero(); b * c * h * w];
    {
        let data = x.data();
        let src = data.as_slice().expect("standard layout");
        for bc in 0..b * c {
            let sbase = bc * oh * ow;
            let dbase = bc * h * w;
            for i in 0..oh {
                for j in 0..ow {
                    let sidx = sbase + i * ow + j;
                    let ch = choices[sidx] as usize;
                    let di = dbase + (2 * i + ch / 2) * w + 2 * j + ch % 2;
                    out[di] = src[sidx];
                }
            }
        }
    }
    let data = ArrayD::from_shape_vec(IxDyn(&[b, c, h, w]), out).unwrap();
    output(data, MaxScatterOp { x: x.clone(), choices })
}

/// 2x2 stride-2 max pooling. Ties resolve to the first maximum in row-major
/// window order, keeping the subgradient deterministic.
pub fn max_pool2<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    check_even("max_pool2", x)?;
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (oh, ow) = (h / 2, w / 2);
    let mut choices = vec![0u8; b * c * oh * ow];
    {
        let data = x.data();
        let src = data.as_slice().expect("standard layout");
        for bc in 0..b * c {
            let sbase = bc * h * w;
            let dbase = bc * oh * ow;
            for i in 0..oh {
                let r0 = sbase + 2 * i * w;
                for j in 0..ow {
                    let col = 2 * j;
                    let window = [
                        src[r0 + col],
                        src[r0 + col + 1],
                        src[r0 + w + col],
                        src[r0 + w + col + 1],
                    ];
                    let mut best = 0usize;
                    for (k, v) in window.iter().enumerate().skip(1) {
                        if *v > window[best] {
                            best = k;
                        }
                    }
                    choices[dbase + i * ow + j] = best as u8;
                }
            }
        }
    }
    Ok(max_gather(x, Rc::new(choices)))
}
