use rand::Rng;

use crate::error::{NnError, Result};
use crate::ops::{
    addb, conv2d, divb, matmul, mean_axes, mulb, sqrt_eps, square, subb, Padding,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const EPSILON: f64 = 1e-8;

/// Fan-in-scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub fn uniform_init<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Tensor::rand_uniform(shape, -bound, bound, rng).with_requires_grad(true)
}

pub struct Conv2d<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub stride: usize,
    pub padding: Padding,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        in_c: usize,
        out_c: usize,
        ksize: usize,
        stride: usize,
        padding: Padding,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = in_c * ksize * ksize;
        let weight = uniform_init(&[out_c, in_c, ksize, ksize], fan_in, rng);
        let bias = bias.then(|| uniform_init(&[out_c], fan_in, rng));
        Conv2d {
            weight,
            bias,
            stride,
            padding,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d(x, &self.weight, self.bias.as_ref(), self.stride, self.padding)
    }

    pub fn named_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.weight"), self.weight.clone()));
        if let Some(b) = &self.bias {
            out.push((format!("{prefix}.bias"), b.clone()));
        }
    }
}

pub struct Linear<T: Scalar> {
    /// Stored `[in, out]` so `forward` is a plain right-multiplication.
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(in_dim: usize, out_dim: usize, bias: bool, rng: &mut impl Rng) -> Self {
        let weight = uniform_init(&[in_dim, out_dim], in_dim, rng);
        let bias = bias.then(|| uniform_init(&[out_dim], in_dim, rng));
        Linear { weight, bias }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.ndim() != 2 || x.shape()[1] != self.weight.shape()[0] {
            return Err(NnError::ShapeMismatch {
                op: "linear",
                lhs: x.shape().to_vec(),
                rhs: self.weight.shape().to_vec(),
            });
        }
        let mut out = matmul(x, &self.weight);
        if let Some(b) = &self.bias {
            out = addb(&out, b);
        }
        Ok(out)
    }

    pub fn named_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.weight"), self.weight.clone()));
        if let Some(b) = &self.bias {
            out.push((format!("{prefix}.bias"), b.clone()));
        }
    }
}

/// Per-sample normalization over every non-batch axis, with a per-feature
/// affine. No cross-sample coupling, so it is safe inside a WGAN critic.
pub struct LayerNorm<T: Scalar> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    feature_shape: Vec<usize>,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn new(feature_shape: &[usize]) -> Result<Self> {
        let n: usize = feature_shape.iter().product();
        if n < 2 {
            return Err(NnError::InvalidArg {
                op: "layer_norm",
                msg: format!("feature shape {feature_shape:?} has fewer than 2 elements"),
            });
        }
        Ok(LayerNorm {
            gamma: Tensor::ones(feature_shape).with_requires_grad(true),
            beta: Tensor::zeros(feature_shape).with_requires_grad(true),
            feature_shape: feature_shape.to_vec(),
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.ndim() != self.feature_shape.len() + 1 || x.shape()[1..] != self.feature_shape[..] {
            return Err(NnError::ShapeMismatch {
                op: "layer_norm",
                lhs: x.shape().to_vec(),
                rhs: self.feature_shape.clone(),
            });
        }
        let axes: Vec<usize> = (1..x.ndim()).collect();
        let mean = mean_axes(x, &axes, true);
        let centered = subb(x, &mean);
        let var = mean_axes(&square(&centered), &axes, true);
        let norm = divb(&centered, &sqrt_eps(&var, EPSILON));
        Ok(addb(&mulb(&norm, &self.gamma), &self.beta))
    }

    pub fn named_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.gamma"), self.gamma.clone()));
        out.push((format!("{prefix}.beta"), self.beta.clone()));
    }
}

/// Batch renormalization over an NCHW tensor, statistics per channel.
///
/// The correction factors r and d are computed from detached statistics and
/// clipped, so gradients flow through the batch statistics only — with
/// `r_max = 1, d_max = 0` this reduces exactly to plain batch norm.
pub struct BatchRenorm<T: Scalar> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub moving_mean: Tensor<T>,
    pub moving_var: Tensor<T>,
    pub r_max: f64,
    pub d_max: f64,
    pub momentum: f64,
    channels: usize,
}

impl<T: Scalar> BatchRenorm<T> {
    pub fn new(channels: usize, momentum: f64) -> Self {
        BatchRenorm {
            gamma: Tensor::ones(&[channels]).with_requires_grad(true),
            beta: Tensor::zeros(&[channels]).with_requires_grad(true),
            moving_mean: Tensor::zeros(&[channels]),
            moving_var: Tensor::ones(&[channels]),
            r_max: 1.0,
            d_max: 0.0,
            momentum,
            channels,
        }
    }

    pub fn set_limits(&mut self, r_max: f64, d_max: f64) {
        self.r_max = r_max;
        self.d_max = d_max;
    }

    pub fn forward(&mut self, x: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        if x.ndim() != 4 || x.shape()[1] != self.channels {
            return Err(NnError::ShapeMismatch {
                op: "batch_renorm",
                lhs: x.shape().to_vec(),
                rhs: vec![self.channels],
            });
        }
        let cshape = [1usize, self.channels, 1, 1];
        let gamma = crate::ops::reshape(&self.gamma, &cshape);
        let beta = crate::ops::reshape(&self.beta, &cshape);
        if !training {
            let mean = crate::ops::reshape(&self.moving_mean, &cshape);
            let sigma = sqrt_eps(&crate::ops::reshape(&self.moving_var, &cshape), EPSILON);
            let norm = divb(&subb(x, &mean), &sigma);
            return Ok(addb(&mulb(&norm, &gamma), &beta));
        }
        let n = x.shape()[0];
        if n < 2 {
            return Err(NnError::DegenerateBatch { batch: n });
        }
        let axes = [0usize, 2, 3];
        let batch_mean = mean_axes(x, &axes, true);
        let batch_var = mean_axes(&square(&subb(x, &batch_mean)), &axes, true);
        let batch_sigma = sqrt_eps(&batch_var, EPSILON);

        // r and d use detached values; gradients must not flow through them.
        let (r, d) = {
            let bm = batch_mean.data();
            let bs = batch_sigma.data();
            let mm = self.moving_mean.data();
            let mv = self.moving_var.data();
            let mut r = vec![T::zero(); self.channels];
            let mut d = vec![T::zero(); self.channels];
            for c in 0..self.channels {
                let mov_sigma = (mv[c].as_f64() + EPSILON).sqrt();
                let rv = (bs[[0, c, 0, 0]].as_f64() / mov_sigma)
                    .clamp(1.0 / self.r_max, self.r_max);
                let dv = ((bm[[0, c, 0, 0]].as_f64() - mm[c].as_f64()) / mov_sigma)
                    .clamp(-self.d_max, self.d_max);
                r[c] = T::cast(rv);
                d[c] = T::cast(dv);
            }
            (
                Tensor::from_vec(&cshape, r),
                Tensor::from_vec(&cshape, d),
            )
        };
        let norm = addb(&mulb(&divb(&subb(x, &batch_mean), &batch_sigma), &r), &d);
        let out = addb(&mulb(&norm, &gamma), &beta);

        // Moving statistics track the detached batch statistics.
        {
            let bm = batch_mean.data();
            let bv = batch_var.data();
            let mut mm = self.moving_mean.data_mut();
            let mut mv = self.moving_var.data_mut();
            let mom = T::cast(self.momentum);
            for c in 0..self.channels {
                let m = bm[[0, c, 0, 0]];
                let v = bv[[0, c, 0, 0]];
                mm[c] = mm[c] + mom * (m - mm[c]);
                mv[c] = mv[c] + mom * (v - mv[c]);
            }
        }
        Ok(out)
    }

    pub fn named_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.gamma"), self.gamma.clone()));
        out.push((format!("{prefix}.beta"), self.beta.clone()));
    }

    pub fn named_buffers(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.moving_mean"), self.moving_mean.clone()));
        out.push((format!("{prefix}.moving_var"), self.moving_var.clone()));
    }
}
