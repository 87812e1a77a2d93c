use ndarray::{ArrayD, IxDyn};

use crate::autograd::OpNode;
use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{addb, matmul, output, permute, reshape};

/// Spatial padding policy for `conv2d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Output spatial dims are `ceil(in / stride)`; zero padding split
    /// evenly, extra row/column on the bottom/right.
    Same,
    /// No padding; kernel must fit inside the input.
    Valid,
}

#[derive(Clone, Debug)]
struct ConvGeom {
    batch: usize,
    in_c: usize,
    in_h: usize,
    in_w: usize,
    k_h: usize,
    k_w: usize,
    stride: usize,
    pad_top: usize,
    pad_left: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeom {
    fn resolve(
        x_shape: &[usize],
        k_h: usize,
        k_w: usize,
        stride: usize,
        padding: Padding,
    ) -> Result<ConvGeom> {
        let (batch, in_c, in_h, in_w) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
        let (out_h, out_w, pad_top, pad_left) = match padding {
            Padding::Same => {
                let out_h = in_h.div_ceil(stride);
                let out_w = in_w.div_ceil(stride);
                let pad_h = ((out_h - 1) * stride + k_h).saturating_sub(in_h);
                let pad_w = ((out_w - 1) * stride + k_w).saturating_sub(in_w);
                (out_h, out_w, pad_h / 2, pad_w / 2)
            }
            Padding::Valid => {
                if in_h < k_h || in_w < k_w {
                    return Err(NnError::InvalidArg {
                        op: "conv2d",
                        msg: format!(
                            "valid padding: kernel {k_h}x{k_w} larger than input {in_h}x{in_w}"
                        ),
                    });
                }
                ((in_h - k_h) / stride + 1, (in_w - k_w) / stride + 1, 0, 0)
            }
        };
        Ok(ConvGeom {
            batch,
            in_c,
            in_h,
            in_w,
            k_h,
            k_w,
            stride,
            pad_top,
            pad_left,
            out_h,
            out_w,
        })
    }

    fn patch_len(&self) -> usize {
        self.in_c * self.k_h * self.k_w
    }

    fn rows(&self) -> usize {
        self.batch * self.out_h * self.out_w
    }
}

struct Im2ColOp<T: Scalar> {
    x: Tensor<T>,
    geom: ConvGeom,
}

impl<T: Scalar> OpNode<T> for Im2ColOp<T> {
    fn name(&self) -> &'static str {
        "im2col"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.x.clone()]
    }
    fn vjp(&self, _out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![needs[0].then(|| col2im(grad, &self.geom))]
    }
}

/// Unrolls conv patches into a `[B*OH*OW, C*KH*KW]` matrix.
fn im2col<T: Scalar>(x: &Tensor<T>, geom: &ConvGeom) -> Tensor<T> {
    let g = geom;
    let mut out = vec![T::zero(); g.rows() * g.patch_len()];
    {
        let data = x.data();
        let src = data.as_slice().expect("standard layout");
        let plane = g.in_h * g.in_w;
        let patch = g.patch_len();
        for b in 0..g.batch {
            for oh in 0..g.out_h {
                for ow in 0..g.out_w {
                    let row = ((b * g.out_h + oh) * g.out_w + ow) * patch;
                    for c in 0..g.in_c {
                        let base = (b * g.in_c + c) * plane;
                        for ki in 0..g.k_h {
                            let ih = (oh * g.stride + ki) as isize - g.pad_top as isize;
                            if ih < 0 || ih >= g.in_h as isize {
                                continue;
                            }
                            let src_row = base + ih as usize * g.in_w;
                            let dst_row = row + (c * g.k_h + ki) * g.k_w;
                            for kj in 0..g.k_w {
                                let iw = (ow * g.stride + kj) as isize - g.pad_left as isize;
                                if iw < 0 || iw >= g.in_w as isize {
                                    continue;
                                }
                                out[dst_row + kj] = src[src_row + iw as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    let data = ArrayD::from_shape_vec(IxDyn(&[g.rows(), g.patch_len()]), out).unwrap();
    output(
        data,
        Im2ColOp {
            x: x.clone(),
            geom: geom.clone(),
        },
    )
}

struct Col2ImOp<T: Scalar> {
    cols: Tensor<T>,
    geom: ConvGeom,
}

impl<T: Scalar> OpNode<T> for Col2ImOp<T> {
    fn name(&self) -> &'static str {
        "col2im"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.cols.clone()]
    }
    fn vjp(&self, _out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![needs[0].then(|| im2col(grad, &self.geom))]
    }
}

/// Adjoint of `im2col`: scatter-adds patch columns back into image layout.
fn col2im<T: Scalar>(cols: &Tensor<T>, geom: &ConvGeom) -> Tensor<T> {
    let g = geom;
    let mut out = vec![T::zero(); g.batch * g.in_c * g.in_h * g.in_w];
    {
        let data = cols.data();
        let src = data.as_slice().expect("standard layout");
        let plane = g.in_h * g.in_w;
        let patch = g.patch_len();
        for b in 0..g.batch {
            for oh in 0..g.out_h {
                for ow in 0..g.out_w {
                    let row = ((b * g.out_h + oh) * g.out_w + ow) * patch;
                    for c in 0..g.in_c {
                        let base = (b * g.in_c + c) * plane;
                        for ki in 0..g.k_h {
                            let ih = (oh * g.stride + ki) as isize - g.pad_top as isize;
                            if ih < 0 || ih >= g.in_h as isize {
                                continue;
                            }
                            let dst_row = base + ih as usize * g.in_w;
                            let src_row = row + (c * g.k_h + ki) * g.k_w;
                            for kj in 0..g.k_w {
                                let iw = (ow * g.stride + kj) as isize - g.pad_left as isize;
                                if iw < 0 || iw >= g.in_w as isize {
                                    continue;
                                }
                                out[dst_row + iw as usize] += src[src_row + kj];
                            }
                        }
                    }
                }
            }
        }
    }
    let data = ArrayD::from_shape_vec(
        IxDyn(&[g.batch, g.in_c, g.in_h, g.in_w]),
        out,
    )
    .unwrap();
    output(
        data,
        Col2ImOp {
            cols: cols.clone(),
            geom: geom.clone(),
        },
    )
}

/// 2-D convolution, NCHW input and `[K, C, fh, fw]` kernel.
pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    if x.ndim() != 4 {
        return Err(NnError::InvalidArg {
            op: "conv2d",
            msg: format!("input must be 4-d NCHW, got shape {:?}", x.shape()),
        });
    }
    if kernel.ndim() != 4 {
        return Err(NnError::InvalidArg {
            op: "conv2d",
            msg: format!("kernel must be 4-d [K,C,fh,fw], got shape {:?}", kernel.shape()),
        });
    }
    if stride == 0 {
        return Err(NnError::InvalidArg {
            op: "conv2d",
            msg: "stride must be >= 1".into(),
        });
    }
    if kernel.shape()[1] != x.shape()[1] {
        return Err(NnError::DimMismatch {
            op: "conv2d",
            axis: "in_channels",
            expected: x.shape()[1],
            got: kernel.shape()[1],
        });
    }
    if let Some(b) = bias {
        if b.shape() != [kernel.shape()[0]] {
            return Err(NnError::DimMismatch {
                op: "conv2d",
                axis: "out_channels",
                expected: kernel.shape()[0],
                got: b.len(),
            });
        }
    }
    let out_c = kernel.shape()[0];
    let geom = ConvGeom::resolve(x.shape(), kernel.shape()[2], kernel.shape()[3], stride, padding)?;
    let cols = im2col(x, &geom);
    let wmat = permute(&reshape(kernel, &[out_c, geom.patch_len()]), &[1, 0]);
    let prod = matmul(&cols, &wmat);
    let nhwc = reshape(&prod, &[geom.batch, geom.out_h, geom.out_w, out_c]);
    let mut out = permute(&nhwc, &[0, 3, 1, 2]);
    if let Some(b) = bias {
        out = addb(&out, &reshape(b, &[1, out_c, 1, 1]));
    }
    Ok(out)
}
