//! The Wasserstein critic: a DenseNet scoring ordered image pairs
//! (conditioning image, candidate). Layer normalization throughout —
//! batch statistics would couple samples and break the gradient-penalty
//! objective — and no sigmoid: the score is an unbounded scalar.
//!
//! Layers follow the DenseNet composite convention with the norm swapped:
//! layer norm → ReLU → conv. Dropout, when enabled, hits only the last
//! conv of each dense block.

use rand::Rng;

use dagan_nn::ops::{self, Padding};
use dagan_nn::{Conv2d, LayerNorm, Linear, NnError, Scalar, Tensor};

use crate::data::ImageShape;
use crate::error::{config_err, Result};

/// Channel compression factor of transition layers.
pub const TRANSITION_COMPRESSION: f64 = 0.5;

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticSpec {
    pub num_dense_blocks: usize,
    pub layers_per_block: usize,
    pub growth_rate: usize,
    /// Dropout at the last conv of each dense block; 0 disables.
    pub dropout_rate: f64,
    pub image_shape: ImageShape,
}

impl Default for CriticSpec {
    fn default() -> Self {
        CriticSpec {
            num_dense_blocks: 4,
            layers_per_block: 4,
            growth_rate: 64,
            dropout_rate: 0.0,
            image_shape: ImageShape::new(1, 32, 32),
        }
    }
}

impl CriticSpec {
    /// Miniature spec for fast tests.
    pub fn tiny() -> Self {
        CriticSpec {
            num_dense_blocks: 2,
            layers_per_block: 2,
            growth_rate: 4,
            dropout_rate: 0.0,
            image_shape: ImageShape::new(1, 8, 8),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_dense_blocks == 0 || self.layers_per_block == 0 || self.growth_rate == 0 {
            return Err(config_err!("critic needs at least one block, layer, and filter"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(config_err!("dropout_rate must be in [0, 1)"));
        }
        let div = 1usize << self.num_dense_blocks;
        let ImageShape { c, h, w } = self.image_shape;
        if c == 0 || h % div != 0 || w % div != 0 || h / div == 0 || w / div == 0 {
            return Err(config_err!(
                "image size {h}x{w} not divisible into {} halvings",
                self.num_dense_blocks
            ));
        }
        Ok(())
    }
}

/// Norm → ReLU → conv, the DenseNet composite unit.
struct CompositeLayer<T: Scalar> {
    norm: LayerNorm<T>,
    conv: Conv2d<T>,
}

impl<T: Scalar> CompositeLayer<T> {
    fn new(
        in_c: usize,
        out_c: usize,
        ksize: usize,
        spatial: (usize, usize),
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(CompositeLayer {
            norm: LayerNorm::new(&[in_c, spatial.0, spatial.1])?,
            conv: Conv2d::new(in_c, out_c, ksize, 1, Padding::Same, true, rng),
        })
    }

    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.norm.forward(x)?;
        Ok(self.conv.forward(&ops::relu(&x))?)
    }

    fn named_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.norm.named_params(&format!("{prefix}.norm"), out);
        self.conv.named_params(&format!("{prefix}.conv"), out);
    }
}

struct DenseBlock<T: Scalar> {
    layers: Vec<CompositeLayer<T>>,
}

struct Transition<T: Scalar> {
    compress: CompositeLayer<T>,
}

pub struct Critic<T: Scalar> {
    spec: CriticSpec,
    blocks: Vec<DenseBlock<T>>,
    transitions: Vec<Transition<T>>,
    head: Linear<T>,
    /// `(kind, name)` of every unit, for normalization audits.
    inventory: Vec<(&'static str, String)>,
}

pub type Critic32 = Critic<f32>;
pub type Critic64 = Critic<f64>;

impl<T: Scalar> Critic<T> {
    pub fn build(spec: CriticSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let k = spec.growth_rate;
        let mut inventory = Vec::new();
        let mut blocks = Vec::with_capacity(spec.num_dense_blocks);
        let mut transitions = Vec::with_capacity(spec.num_dense_blocks);
        // The network sees the ordered pair stacked on the channel axis.
        let mut channels = 2 * spec.image_shape.c;
        let mut spatial = (spec.image_shape.h, spec.image_shape.w);
        for b in 0..spec.num_dense_blocks {
            let mut layers = Vec::with_capacity(spec.layers_per_block);
            for i in 0..spec.layers_per_block {
                let in_c = channels + i * k;
                layers.push(CompositeLayer::new(in_c, k, 3, spatial, rng)?);
                inventory.push(("layer_norm+conv3x3", format!("block.{b}.{i}")));
            }
            blocks.push(DenseBlock { layers });
            channels += spec.layers_per_block * k;
            let out_c = (channels as f64 * TRANSITION_COMPRESSION).floor() as usize;
            transitions.push(Transition {
                compress: CompositeLayer::new(channels, out_c, 1, spatial, rng)?,
            });
            inventory.push(("layer_norm+conv1x1+avgpool", format!("transition.{b}")));
            channels = out_c;
            spatial = (spatial.0 / 2, spatial.1 / 2);
        }
        let head = Linear::new(channels, 1, true, rng);
        inventory.push(("global_avg_pool+linear", "head".into()));
        Ok(Critic { spec, blocks, transitions, head, inventory })
    }

    pub fn spec(&self) -> &CriticSpec {
        &self.spec
    }

    /// Scores an ordered pair per batch element: `[N, 1]`, unbounded.
    pub fn score<R: Rng>(
        &self,
        x_a: &Tensor<T>,
        x_b: &Tensor<T>,
        training: bool,
        rng: &mut R,
    ) -> Result<Tensor<T>> {
        let ImageShape { c, h, w } = self.spec.image_shape;
        for x in [x_a, x_b] {
            if x.ndim() != 4 || x.shape()[1..] != [c, h, w] {
                return Err(NnError::ShapeMismatch {
                    op: "critic",
                    lhs: x.shape().to_vec(),
                    rhs: vec![0, c, h, w],
                }
                .into());
            }
        }
        if x_a.shape()[0] != x_b.shape()[0] {
            return Err(NnError::ShapeMismatch {
                op: "critic pair",
                lhs: x_a.shape().to_vec(),
                rhs: x_b.shape().to_vec(),
            }
            .into());
        }
        let mut x = ops::concat(&[x_a.clone(), x_b.clone()], 1);
        for b in 0..self.blocks.len() {
            x = self.dense_block(b, &x, training, rng)?;
            x = self.transition(b, &x)?;
        }
        let pooled = ops::global_avg_pool(&x)?;
        Ok(self.head.forward(&pooled)?)
    }

    /// One dense block: every layer consumes the concatenation of the
    /// block input and all earlier layer outputs; the block output keeps
    /// the input channels and appends `layers · k` new ones.
    pub fn dense_block<R: Rng>(
        &self,
        index: usize,
        x: &Tensor<T>,
        training: bool,
        rng: &mut R,
    ) -> Result<Tensor<T>> {
        let block = &self.blocks[index];
        let last = block.layers.len() - 1;
        let mut feats = vec![x.clone()];
        for (i, layer) in block.layers.iter().enumerate() {
            let cat = if feats.len() == 1 { feats[0].clone() } else { ops::concat(&feats, 1) };
            let mut out = layer.forward(&cat)?;
            if i == last {
                out = ops::dropout(&out, self.spec.dropout_rate, training, rng);
            }
            feats.push(out);
        }
        Ok(ops::concat(&feats, 1))
    }

    /// Compression conv then 2×2 average pool: halves channels (×0.5,
    /// floored) and spatial dims. Odd spatial dims are an error.
    pub fn transition(&self, index: usize, x: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.transitions[index].compress.forward(x)?;
        Ok(ops::avg_pool2(&x)?)
    }

    pub fn named_params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        for (b, block) in self.blocks.iter().enumerate() {
            for (i, layer) in block.layers.iter().enumerate() {
                layer.named_params(&format!("block.{b}.{i}"), &mut out);
            }
            self.transitions[b]
                .compress
                .named_params(&format!("transition.{b}"), &mut out);
        }
        self.head.named_params("head", &mut out);
        out
    }

    /// Every unit's kind tag — lets callers verify the normalization
    /// story (no batch statistics anywhere in the critic).
    pub fn layer_inventory(&self) -> &[(&'static str, String)] {
        &self.inventory
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        for (_, p) in self.named_params() {
            p.set_requires_grad(trainable);
        }
    }
}
