//! The UResNet generator: a convolutional encoder down to a small
//! bottleneck, latent injection there, and a mirrored decoder back to
//! image space. Three kinds of skip wiring coexist:
//!
//! * dense intra-block skips — each layer inside a block sees the
//!   concatenation of a sliding window of earlier layer outputs, reset
//!   whenever the window reaches `skip_distance`;
//! * between-block linear bypasses — a strided 1×1 projection of each
//!   block's features rides past the block boundary and joins the next
//!   block's input (3×3 after nearest-neighbour resize on the way up);
//! * long skips — encoder feature maps concatenate into the
//!   equal-resolution decoder stage.
//!
//! Every conv layer is 3×3 `Same` followed by leaky ReLU (slope 0.01) and
//! batch renormalization, except the linear bypasses and the output head.

use rand::Rng;

use dagan_nn::ops::{self, Padding};
use dagan_nn::{backward, BatchRenorm, Conv2d, Linear, NnError, Scalar, Tensor};

use crate::data::ImageShape;
use crate::error::{config_err, train_err, Result};

pub const LEAKY_SLOPE: f64 = 0.01;
/// Moving-average decay for batch renorm statistics.
pub const RENORM_MOMENTUM: f64 = 0.99;

/// Architecture recipe. `layers_per_block` counts the dense stack plus
/// the scale layer, so the default (4 blocks per side, 4 layers each)
/// yields 8 blocks of 3 dense convs + 1 strided/resize conv.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSpec {
    pub num_blocks_per_side: usize,
    pub layers_per_block: usize,
    /// Output filters per block; one entry per encoder block, reused in
    /// order by the decoder.
    pub k_list: Vec<usize>,
    /// Dense-window reset distance inside a block; equal to
    /// `layers_per_block` the window never resets.
    pub skip_distance: usize,
    pub z_dim: usize,
    pub image_shape: ImageShape,
    pub dropout_rate: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            num_blocks_per_side: 4,
            layers_per_block: 4,
            k_list: vec![64; 4],
            skip_distance: 4,
            z_dim: 100,
            image_shape: ImageShape::new(1, 32, 32),
            dropout_rate: 0.3,
        }
    }
}

impl GeneratorSpec {
    /// A miniature spec for fast tests: 8×8 images, 2 blocks per side,
    /// 2 layers per block, 4 filters.
    pub fn tiny() -> Self {
        GeneratorSpec {
            num_blocks_per_side: 2,
            layers_per_block: 2,
            k_list: vec![4; 2],
            skip_distance: 2,
            z_dim: 8,
            image_shape: ImageShape::new(1, 8, 8),
            dropout_rate: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.num_blocks_per_side;
        if l == 0 {
            return Err(config_err!("generator needs at least one block per side"));
        }
        if self.layers_per_block < 2 {
            return Err(config_err!("layers_per_block must be >= 2 (dense stack plus scale layer)"));
        }
        if self.k_list.len() != l {
            return Err(config_err!(
                "k_list has {} entries for {} blocks per side",
                self.k_list.len(),
                l
            ));
        }
        if self.k_list.iter().any(|&k| k == 0) {
            return Err(config_err!("filter counts must be positive"));
        }
        if self.skip_distance == 0 {
            return Err(config_err!("skip_distance must be >= 1"));
        }
        if self.z_dim == 0 {
            return Err(config_err!("z_dim must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(config_err!("dropout_rate must be in [0, 1)"));
        }
        let div = 1usize << l;
        let ImageShape { c, h, w } = self.image_shape;
        if c == 0 || h % div != 0 || w % div != 0 || h / div == 0 || w / div == 0 {
            return Err(config_err!(
                "image size {h}x{w} not divisible into {l} halvings"
            ));
        }
        Ok(())
    }

    /// `(channels, h, w)` of the bottleneck feature map.
    pub fn bottleneck_shape(&self) -> (usize, usize, usize) {
        let div = 1usize << self.num_blocks_per_side;
        (
            self.k_list[self.num_blocks_per_side - 1],
            self.image_shape.h / div,
            self.image_shape.w / div,
        )
    }
}

/// One conv unit: 3×3 `Same` conv, leaky ReLU, batch renorm.
struct ConvUnit<T: Scalar> {
    conv: Conv2d<T>,
    brn: BatchRenorm<T>,
}

impl<T: Scalar> ConvUnit<T> {
    fn new(in_c: usize, out_c: usize, stride: usize, rng: &mut impl Rng) -> Self {
        ConvUnit {
            conv: Conv2d::new(in_c, out_c, 3, stride, Padding::Same, true, rng),
            brn: BatchRenorm::new(out_c, RENORM_MOMENTUM),
        }
    }

    fn forward(&mut self, x: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        let x = self.conv.forward(x)?;
        let x = ops::leaky_relu(&x, LEAKY_SLOPE);
        Ok(self.brn.forward(&x, training)?)
    }

    fn named_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.conv.named_params(&format!("{prefix}.conv"), out);
        self.brn.named_params(&format!("{prefix}.brn"), out);
    }

    fn named_buffers(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.brn.named_buffers(&format!("{prefix}.brn"), out);
    }
}

/// The dense stack: `layers_per_block - 1` conv units, each consuming the
/// concatenation of the current window of previous outputs.
struct DenseStack<T: Scalar> {
    layers: Vec<ConvUnit<T>>,
    skip_distance: usize,
}

impl<T: Scalar> DenseStack<T> {
    /// Builds the stack and returns its output channel count.
    fn new(in_c: usize, n: usize, skip_distance: usize, k: usize, rng: &mut impl Rng) -> (Self, usize) {
        let mut window = vec![in_c];
        let mut layers = Vec::with_capacity(n - 1);
        for _ in 1..n {
            let cin: usize = window.iter().sum();
            layers.push(ConvUnit::new(cin, k, 1, rng));
            if window.len() >= skip_distance {
                window = vec![k];
            } else {
                window.push(k);
            }
        }
        (DenseStack { layers, skip_distance }, k)
    }

    fn forward(&mut self, x: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        let mut window = vec![x.clone()];
        let mut x = x.clone();
        for layer in &mut self.layers {
            let cat = if window.len() == 1 {
                window[0].clone()
            } else {
                ops::concat(&window, 1)
            };
            x = layer.forward(&cat, training)?;
            if window.len() >= self.skip_distance {
                window = vec![x.clone()];
            } else {
                window.push(x.clone());
            }
        }
        Ok(x)
    }

    fn named_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        for (i, layer) in self.layers.iter().enumerate() {
            layer.named_params(&format!("{prefix}.{i}"), out);
        }
    }

    fn named_buffers(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        for (i, layer) in self.layers.iter().enumerate() {
            layer.named_buffers(&format!("{prefix}.{i}"), out);
        }
    }
}

struct EncoderBlock<T: Scalar> {
    dense: DenseStack<T>,
    /// Strided conv unit halving the resolution, followed by dropout.
    down: ConvUnit<T>,
    /// Strided 1×1 linear bypass carried to the next block; the last
    /// block has none (nothing downstream would consume it).
    bypass: Option<Conv2d<T>>,
}

struct DecoderBlock<T: Scalar> {
    dense: DenseStack<T>,
    /// Nearest-neighbour ×2 then a conv unit.
    up: ConvUnit<T>,
    /// Nearest-neighbour ×2 then a linear 3×3 conv; absent in the last
    /// block.
    bypass: Option<Conv2d<T>>,
}

pub struct Generator<T: Scalar> {
    spec: GeneratorSpec,
    enc: Vec<EncoderBlock<T>>,
    z_proj: Linear<T>,
    dec: Vec<DecoderBlock<T>>,
    head: Conv2d<T>,
}

pub type Generator32 = Generator<f32>;
pub type Generator64 = Generator<f64>;

impl<T: Scalar> Generator<T> {
    /// Constructs and initializes the network, then audits connectivity:
    /// a probe backward pass must deliver a nonzero gradient to every
    /// parameter, so dead branches fail construction instead of training
    /// silently.
    pub fn build(spec: GeneratorSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let l = spec.num_blocks_per_side;
        let n = spec.layers_per_block;
        let sd = spec.skip_distance;
        let ks = &spec.k_list;

        let mut enc = Vec::with_capacity(l);
        let mut enc_out = Vec::with_capacity(l); // dense-stack output channels per block
        let mut in_c = spec.image_shape.c;
        for j in 0..l {
            let (dense, out_c) = DenseStack::new(in_c, n, sd, ks[j], rng);
            enc_out.push(out_c);
            let down = ConvUnit::new(out_c, ks[j], 2, rng);
            let bypass = (j + 1 < l)
                .then(|| Conv2d::new(out_c, ks[j], 1, 2, Padding::Same, true, rng));
            enc.push(EncoderBlock { dense, down, bypass });
            // Next block sees the downscaled features plus the bypass.
            in_c = if j + 1 < l { 2 * ks[j] } else { ks[j] };
        }

        let (bot_c, bot_h, bot_w) = spec.bottleneck_shape();
        let z_proj = Linear::new(spec.z_dim, bot_c * bot_h * bot_w, true, rng);

        let mut dec = Vec::with_capacity(l);
        let mut in_c = 2 * bot_c; // bottleneck features plus projected latent
        for j in 0..l {
            let (dense, out_c) = DenseStack::new(in_c, n, sd, ks[j], rng);
            let up = ConvUnit::new(out_c, ks[j], 1, rng);
            let bypass = (j + 1 < l)
                .then(|| Conv2d::new(out_c, ks[j], 3, 1, Padding::Same, true, rng));
            dec.push(DecoderBlock { dense, up, bypass });
            in_c = if j + 1 < l {
                // Upscaled features, bypass, and the equal-resolution
                // long skip from the encoder.
                2 * ks[j] + enc_out[l - 1 - j]
            } else {
                ks[j]
            };
        }

        let head_in = ks[l - 1] + enc_out[0];
        let head = Conv2d::new(head_in, spec.image_shape.c, 3, 1, Padding::Same, true, rng);

        let mut gen = Generator { spec, enc, z_proj, dec, head };
        gen.audit_unique_names()?;
        gen.audit_connectivity(rng)?;
        Ok(gen)
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    /// Runs the encoder and returns `(bottleneck, per-block dense-stack
    /// outputs)`; the latter feed the long skips.
    fn encode<R: Rng>(
        &mut self,
        x: &Tensor<T>,
        training: bool,
        rng: &mut R,
    ) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        let rate = self.spec.dropout_rate;
        let mut feats = Vec::with_capacity(self.enc.len());
        let mut x = x.clone();
        let mut bypass: Option<Tensor<T>> = None;
        for block in &mut self.enc {
            let input = match &bypass {
                None => x.clone(),
                Some(p) => ops::concat(&[x.clone(), p.clone()], 1),
            };
            let t = block.dense.forward(&input, training)?;
            bypass = match &block.bypass {
                Some(conv) => Some(conv.forward(&t)?),
                None => None,
            };
            x = block.down.forward(&t, training)?;
            x = ops::dropout(&x, rate, training, rng);
            feats.push(t);
        }
        Ok((x, feats))
    }

    fn forward<R: Rng>(
        &mut self,
        x: &Tensor<T>,
        z: &Tensor<T>,
        training: bool,
        rng: &mut R,
        skip_scale: Option<&[f64]>,
    ) -> Result<Tensor<T>> {
        self.check_inputs(x, Some(z))?;
        if let Some(s) = skip_scale {
            if s.len() != self.spec.num_blocks_per_side {
                return Err(config_err!(
                    "skip_scale has {} entries for {} long skips",
                    s.len(),
                    self.spec.num_blocks_per_side
                ));
            }
        }
        let l = self.spec.num_blocks_per_side;
        let batch = x.shape()[0];
        let (bot_c, bot_h, bot_w) = self.spec.bottleneck_shape();

        let (r, feats) = self.encode(x, training, rng)?;
        let zf = ops::reshape(&self.z_proj.forward(z)?, &[batch, bot_c, bot_h, bot_w]);
        let mut x = ops::concat(&[r, zf], 1);

        let scaled_skip = |j: usize| -> Tensor<T> {
            match skip_scale {
                Some(s) => ops::mul_scalar(&feats[j], T::cast(s[j])),
                None => feats[j].clone(),
            }
        };

        let mut bypass: Option<Tensor<T>> = None;
        for j in 0..l {
            let mut parts = vec![x.clone()];
            if let Some(p) = &bypass {
                parts.push(p.clone());
            }
            if j > 0 {
                parts.push(scaled_skip(l - j));
            }
            let input = if parts.len() == 1 {
                parts.pop().unwrap()
            } else {
                ops::concat(&parts, 1)
            };
            let t = self.dec[j].dense.forward(&input, training)?;
            bypass = match &self.dec[j].bypass {
                Some(conv) => Some(conv.forward(&ops::upsample_nearest2(&t)?)?),
                None => None,
            };
            x = self.dec[j].up.forward(&ops::upsample_nearest2(&t)?, training)?;
        }

        let x = ops::concat(&[x, scaled_skip(0)], 1);
        let out = ops::tanh(&self.head.forward(&x)?);
        // tanh lands in (-1, 1); images live in [0, 1].
        Ok(ops::mul_scalar(&ops::add_scalar(&out, T::one()), T::cast(0.5)))
    }

    /// Generates images conditioned on `x` with latent `z`. Deterministic
    /// given `(params, x, z, rng state)`; `rng` only feeds dropout, which
    /// is inert when `training` is false.
    pub fn generate<R: Rng>(
        &mut self,
        x: &Tensor<T>,
        z: &Tensor<T>,
        training: bool,
        rng: &mut R,
    ) -> Result<Tensor<T>> {
        self.forward(x, z, training, rng, None)
    }

    /// [`Generator::generate`] with per-long-skip scale factors (index 0
    /// is the full-resolution skip into the head). Zeroing an entry
    /// ablates that skip; the connectivity tests rely on this.
    pub fn generate_with_skip_scale<R: Rng>(
        &mut self,
        x: &Tensor<T>,
        z: &Tensor<T>,
        training: bool,
        rng: &mut R,
        skip_scale: &[f64],
    ) -> Result<Tensor<T>> {
        self.forward(x, z, training, rng, Some(skip_scale))
    }

    /// The pre-concatenation bottleneck representation of `x`: a pure
    /// function of the input (eval mode, no dropout, no latent).
    pub fn encode_bottleneck(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_inputs(x, None)?;
        let mut rng = dagan_nn::rng::seeded_rng(0); // unused in eval mode
        let (r, _) = self.encode(x, false, &mut rng)?;
        Ok(r)
    }

    fn check_inputs(&self, x: &Tensor<T>, z: Option<&Tensor<T>>) -> Result<()> {
        let ImageShape { c, h, w } = self.spec.image_shape;
        if x.ndim() != 4 || x.shape()[1..] != [c, h, w] {
            return Err(NnError::ShapeMismatch {
                op: "generator",
                lhs: x.shape().to_vec(),
                rhs: vec![0, c, h, w],
            }
            .into());
        }
        if let Some(z) = z {
            if z.shape() != [x.shape()[0], self.spec.z_dim] {
                return Err(NnError::ShapeMismatch {
                    op: "generator latent",
                    lhs: z.shape().to_vec(),
                    rhs: vec![x.shape()[0], self.spec.z_dim],
                }
                .into());
            }
        }
        Ok(())
    }

    /// All trainable parameters, hierarchically named, in a fixed order.
    pub fn named_params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        for (i, block) in self.enc.iter().enumerate() {
            block.dense.named_params(&format!("enc.{i}.dense"), &mut out);
            block.down.named_params(&format!("enc.{i}.down"), &mut out);
            if let Some(conv) = &block.bypass {
                conv.named_params(&format!("enc.{i}.bypass"), &mut out);
            }
        }
        self.z_proj.named_params("z_proj", &mut out);
        for (i, block) in self.dec.iter().enumerate() {
            block.dense.named_params(&format!("dec.{i}.dense"), &mut out);
            block.up.named_params(&format!("dec.{i}.up"), &mut out);
            if let Some(conv) = &block.bypass {
                conv.named_params(&format!("dec.{i}.bypass"), &mut out);
            }
        }
        self.head.named_params("head", &mut out);
        out
    }

    /// Batch-renorm moving statistics (state, not trained).
    pub fn named_buffers(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        for (i, block) in self.enc.iter().enumerate() {
            block.dense.named_buffers(&format!("enc.{i}.dense"), &mut out);
            block.down.named_buffers(&format!("enc.{i}.down"), &mut out);
        }
        for (i, block) in self.dec.iter().enumerate() {
            block.dense.named_buffers(&format!("dec.{i}.dense"), &mut out);
            block.up.named_buffers(&format!("dec.{i}.up"), &mut out);
        }
        out
    }

    /// Sets the renorm correction limits on every normalization layer
    /// (the trainer ramps these from plain batch-norm towards full
    /// renormalization).
    pub fn set_renorm_limits(&mut self, r_max: f64, d_max: f64) {
        for block in &mut self.enc {
            for unit in &mut block.dense.layers {
                unit.brn.set_limits(r_max, d_max);
            }
            block.down.brn.set_limits(r_max, d_max);
        }
        for block in &mut self.dec {
            for unit in &mut block.dense.layers {
                unit.brn.set_limits(r_max, d_max);
            }
            block.up.brn.set_limits(r_max, d_max);
        }
    }

    /// Freezes or unfreezes all parameters (frozen generators augment
    /// downstream models without receiving gradients).
    pub fn set_trainable(&mut self, trainable: bool) {
        for (_, p) in self.named_params() {
            p.set_requires_grad(trainable);
        }
    }

    fn audit_unique_names(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (name, _) in self.named_params() {
            if !seen.insert(name.clone()) {
                return Err(train_err!("duplicate parameter name {name}"));
            }
        }
        Ok(())
    }

    /// Probe pass: random input and a random linear functional of the
    /// output must reach every parameter with a nonzero gradient.
    fn audit_connectivity(&mut self, rng: &mut impl Rng) -> Result<()> {
        let ImageShape { c, h, w } = self.spec.image_shape;
        let x = Tensor::rand_uniform(&[2, c, h, w], 0.0, 1.0, rng);
        let z = Tensor::randn(&[2, self.spec.z_dim], rng);
        let out = self.forward(&x, &z, false, rng, None)?;
        let probe = Tensor::randn(out.shape(), rng);
        let loss = ops::sum_all(&ops::mul(&out, &probe));
        backward(&loss)?;
        let mut dead = Vec::new();
        for (name, p) in self.named_params() {
            let nonzero = p
                .grad()
                .is_some_and(|g| g.to_vec().iter().any(|v| *v != T::zero()));
            if !nonzero {
                dead.push(name);
            }
            p.zero_grad();
        }
        if !dead.is_empty() {
            return Err(train_err!("dead generator branches: {}", dead.join(", ")));
        }
        Ok(())
    }
}

/// Draws a batch of latents from the standard normal prior.
pub fn sample_z<T: Scalar>(n: usize, z_dim: usize, rng: &mut impl Rng) -> Tensor<T> {
    Tensor::randn(&[n, z_dim], rng)
}
