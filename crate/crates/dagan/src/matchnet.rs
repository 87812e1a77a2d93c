//! One-shot harness: matching networks with optional generator-augmented
//! episodes, the differentiable sample selector, and the pixel-distance
//! baseline.
//!
//! An episode draws `way` classes with `shot` support and
//! `query_per_class` query images each. Augmentation stacks K generated
//! images per support item as extra support entries sharing the label.
//! The generator stays frozen throughout; when the selector is on, z
//! comes from a small MLP over the support embedding and gradients reach
//! it through the generated pixels.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use dagan_nn::ops::{self, Padding};
use dagan_nn::rng::seeded_rng;
use dagan_nn::{
    backward, Adam, BatchRenorm, Conv2d, Linear, NoGradGuard, Scalar, Tensor,
};

use crate::data::{batch_tensor, Domain, ImageShape, LabeledImageSet};
use crate::error::{config_err, data_err, train_err, Result};
use crate::generator::{sample_z, Generator, RENORM_MOMENTUM};

/// Guards the attention softmax against degenerate embeddings.
const MIN_EMBED_NORM: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Embedding network

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedSpec {
    pub num_layers: usize,
    pub filters: usize,
    pub image_shape: ImageShape,
}

impl Default for EmbedSpec {
    fn default() -> Self {
        EmbedSpec { num_layers: 4, filters: 64, image_shape: ImageShape::new(1, 32, 32) }
    }
}

impl EmbedSpec {
    pub fn tiny() -> Self {
        EmbedSpec { num_layers: 2, filters: 4, image_shape: ImageShape::new(1, 8, 8) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.filters == 0 {
            return Err(config_err!("embed net needs at least one layer and filter"));
        }
        let div = 1usize << self.num_layers;
        let ImageShape { c, h, w } = self.image_shape;
        if c == 0 || h % div != 0 || w % div != 0 || h / div == 0 || w / div == 0 {
            return Err(config_err!(
                "image size {h}x{w} does not survive {} poolings",
                self.num_layers
            ));
        }
        Ok(())
    }

    /// Flattened output width: 32×32 with 4 layers of 64 filters → 256.
    pub fn embed_dim(&self) -> usize {
        let div = 1usize << self.num_layers;
        self.filters * (self.image_shape.h / div) * (self.image_shape.w / div)
    }
}

/// Per layer: 3×3 conv → relu → batch renorm → 2×2 max pool; flatten at
/// the end.
pub struct EmbedNet<T: Scalar> {
    spec: EmbedSpec,
    convs: Vec<Conv2d<T>>,
    renorms: Vec<BatchRenorm<T>>,
}

impl<T: Scalar> EmbedNet<T> {
    pub fn build(spec: EmbedSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let mut convs = Vec::with_capacity(spec.num_layers);
        let mut renorms = Vec::with_capacity(spec.num_layers);
        let mut in_c = spec.image_shape.c;
        for _ in 0..spec.num_layers {
            convs.push(Conv2d::new(in_c, spec.filters, 3, 1, Padding::Same, true, rng));
            renorms.push(BatchRenorm::new(spec.filters, RENORM_MOMENTUM));
            in_c = spec.filters;
        }
        Ok(EmbedNet { spec, convs, renorms })
    }

    pub fn spec(&self) -> &EmbedSpec {
        &self.spec
    }

    pub fn forward(&mut self, x: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        let ImageShape { c, h, w } = self.spec.image_shape;
        if x.ndim() != 4 || x.shape()[1..] != [c, h, w] {
            return Err(data_err!("embed input {:?} does not fit {:?}", x.shape(), self.spec));
        }
        let n = x.shape()[0];
        let mut cur = x.clone();
        for i in 0..self.convs.len() {
            cur = self.convs[i].forward(&cur)?;
            cur = ops::relu(&cur);
            cur = self.renorms[i].forward(&cur, training)?;
            cur = ops::max_pool2(&cur)?;
        }
        Ok(ops::reshape(&cur, &[n, self.spec.embed_dim()]))
    }

    pub fn named_params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        for (i, conv) in self.convs.iter().enumerate() {
            conv.named_params(&format!("layer.{i}.conv"), &mut out);
            self.renorms[i].named_params(&format!("layer.{i}.brn"), &mut out);
        }
        out
    }

    pub fn named_buffers(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        for (i, brn) in self.renorms.iter().enumerate() {
            brn.named_buffers(&format!("layer.{i}.brn"), &mut out);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Attention classification

/// Softmax attention over cosine similarities. Returns `[Q, way]` class
/// probabilities: each query's attention mass, summed per class over the
/// support items. Rows sum to 1; fully differentiable.
pub fn attention_classify<T: Scalar>(
    query_embs: &Tensor<T>,
    support_embs: &Tensor<T>,
    support_labels: &[usize],
    way: usize,
) -> Result<Tensor<T>> {
    if query_embs.ndim() != 2 || support_embs.ndim() != 2 {
        return Err(data_err!("embeddings must be [N, D] matrices"));
    }
    let d = query_embs.shape()[1];
    let s = support_embs.shape()[0];
    if support_embs.shape()[1] != d {
        return Err(data_err!(
            "query dim {d} vs support dim {}",
            support_embs.shape()[1]
        ));
    }
    if s == 0 || support_labels.len() != s {
        return Err(data_err!("{s} support items but {} labels", support_labels.len()));
    }
    if let Some(&bad) = support_labels.iter().find(|&&l| l >= way) {
        return Err(data_err!("support label {bad} out of range for {way}-way episode"));
    }
    for (name, embs) in [("query", query_embs), ("support", support_embs)] {
        let flat = embs.to_vec();
        for (row, chunk) in flat.chunks(d).enumerate() {
            let norm_sq: f64 = chunk.iter().map(|v| v.as_f64().powi(2)).sum();
            if norm_sq.sqrt() < MIN_EMBED_NORM {
                return Err(data_err!("{name} embedding {row} has zero norm"));
            }
        }
    }
    let normalize = |x: &Tensor<T>| {
        let norm = ops::sqrt_eps(&ops::sum_axes(&ops::square(x), &[1], true), 0.0);
        ops::divb(x, &norm)
    };
    let qn = normalize(query_embs);
    let sn = normalize(support_embs);
    let sims = ops::matmul(&qn, &ops::permute(&sn, &[1, 0]));
    let attention = ops::softmax(&sims, 1);
    // Constant [S, way] one-hot; matmul pools attention mass per class.
    let mut onehot = vec![T::zero(); s * way];
    for (i, &l) in support_labels.iter().enumerate() {
        onehot[i * way + l] = T::one();
    }
    Ok(ops::matmul(&attention, &Tensor::from_vec(&[s, way], onehot)))
}

// ---------------------------------------------------------------------------
// Sample selector

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectorSpec {
    pub input_dim: usize,
    pub hidden: usize,
    pub z_dim: usize,
}

impl SelectorSpec {
    pub fn new(input_dim: usize, z_dim: usize) -> Self {
        SelectorSpec { input_dim, hidden: 128, z_dim }
    }
}

/// Two-layer MLP mapping a support embedding to a z mean; during
/// training unit-variance noise is added (reparameterized, so gradients
/// pass through the mean).
pub struct SelectorNet<T: Scalar> {
    spec: SelectorSpec,
    l1: Linear<T>,
    l2: Linear<T>,
}

impl<T: Scalar> SelectorNet<T> {
    pub fn build(spec: SelectorSpec, rng: &mut impl Rng) -> Self {
        let l1 = Linear::new(spec.input_dim, spec.hidden, true, rng);
        let l2 = Linear::new(spec.hidden, spec.z_dim, true, rng);
        SelectorNet { spec, l1, l2 }
    }

    pub fn spec(&self) -> &SelectorSpec {
        &self.spec
    }

    pub fn forward<R: Rng>(
        &self,
        emb: &Tensor<T>,
        training: bool,
        rng: &mut R,
    ) -> Result<Tensor<T>> {
        let mean = self.l2.forward(&ops::relu(&self.l1.forward(emb)?))?;
        if !training {
            return Ok(mean);
        }
        let noise = Tensor::randn(mean.shape(), rng);
        Ok(ops::add(&mean, &noise.detach()))
    }

    pub fn named_params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.l1.named_params("l1", &mut out);
        self.l2.named_params("l2", &mut out);
        out
    }
}

// ---------------------------------------------------------------------------
// Episodes

/// A few-shot task instance. Labels are episode-local (0..way); the
/// original dataset classes sit in `class_map`.
#[derive(Clone, Debug)]
pub struct Episode {
    pub way: usize,
    pub shot: usize,
    pub query_per_class: usize,
    pub class_map: Vec<usize>,
    pub support_images: Vec<Vec<f32>>,
    pub support_labels: Vec<usize>,
    pub query_images: Vec<Vec<f32>>,
    pub query_labels: Vec<usize>,
}

/// Draws an episode from `domain`. Only classes with enough images for
/// `shot + query_per_class` draws participate.
pub fn make_episode(
    data: &LabeledImageSet,
    domain: Domain,
    way: usize,
    shot: usize,
    query_per_class: usize,
    rng: &mut impl Rng,
) -> Result<Episode> {
    if way == 0 || shot == 0 || query_per_class == 0 {
        return Err(config_err!("way, shot, and query_per_class must be positive"));
    }
    let need = shot + query_per_class;
    let mut eligible: Vec<usize> = data
        .classes_in(domain)
        .into_iter()
        .filter(|&k| data.classes[k].images.len() >= need)
        .collect();
    if eligible.len() < way {
        return Err(data_err!(
            "episode wants {way} classes with ≥{need} images; domain offers {}",
            eligible.len()
        ));
    }
    eligible.shuffle(rng);
    let class_map: Vec<usize> = eligible[..way].to_vec();
    let mut support_images = Vec::with_capacity(way * shot);
    let mut support_labels = Vec::with_capacity(way * shot);
    let mut query_images = Vec::with_capacity(way * query_per_class);
    let mut query_labels = Vec::with_capacity(way * query_per_class);
    for (label, &class) in class_map.iter().enumerate() {
        let mut order: Vec<usize> = (0..data.classes[class].images.len()).collect();
        order.shuffle(rng);
        for &i in &order[..shot] {
            support_images.push(data.image(class, i).to_vec());
            support_labels.push(label);
        }
        for &i in &order[shot..need] {
            query_images.push(data.image(class, i).to_vec());
            query_labels.push(label);
        }
    }
    Ok(Episode {
        way,
        shot,
        query_per_class,
        class_map,
        support_images,
        support_labels,
        query_images,
        query_labels,
    })
}

// ---------------------------------------------------------------------------
// The matching network

pub struct Matchnet<T: Scalar> {
    pub embed: EmbedNet<T>,
    pub selector: Option<SelectorNet<T>>,
}

pub type Matchnet32 = Matchnet<f32>;

impl<T: Scalar> Matchnet<T> {
    pub fn build(
        embed_spec: EmbedSpec,
        selector_z_dim: Option<usize>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let embed = EmbedNet::build(embed_spec, rng)?;
        let selector = selector_z_dim
            .map(|z| SelectorNet::build(SelectorSpec::new(embed.spec().embed_dim(), z), rng));
        Ok(Matchnet { embed, selector })
    }

    pub fn named_params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out: Vec<(String, Tensor<T>)> = self
            .embed
            .named_params()
            .into_iter()
            .map(|(n, p)| (format!("embed.{n}"), p))
            .collect();
        if let Some(sel) = &self.selector {
            out.extend(sel.named_params().into_iter().map(|(n, p)| (format!("selector.{n}"), p)));
        }
        out
    }

    pub fn named_buffers(&self) -> Vec<(String, Tensor<T>)> {
        self.embed
            .named_buffers()
            .into_iter()
            .map(|(n, p)| (format!("embed.{n}"), p))
            .collect()
    }

    /// Support set as a tensor, with K generated variants per item when a
    /// generator is supplied. The generator always runs in eval mode (it
    /// is frozen); z comes from the selector when present, else N(0, I).
    /// Returns the support tensor and its episode-local labels.
    pub fn support_pool<R: Rng>(
        &mut self,
        episode: &Episode,
        mut dagan: Option<(&mut Generator<T>, usize)>,
        training: bool,
        rng: &mut R,
    ) -> Result<(Tensor<T>, Vec<usize>)> {
        let shape = self.embed.spec().image_shape;
        let refs: Vec<&[f32]> = episode.support_images.iter().map(Vec::as_slice).collect();
        let real = batch_tensor::<T>(&refs, shape);
        let k = dagan.as_ref().map_or(0, |&(_, k)| k);
        if k == 0 {
            return Ok((real, episode.support_labels.clone()));
        }
        let (generator, _) = dagan.as_mut().expect("k > 0 implies a generator");
        let mut parts = vec![real.clone()];
        let mut labels = episode.support_labels.clone();
        for _ in 0..k {
            let z = match &self.selector {
                Some(sel) => {
                    let emb = self.embed.forward(&real, training)?;
                    sel.forward(&emb, training, rng)?
                }
                None => sample_z::<T>(episode.support_images.len(), generator.spec().z_dim, rng),
            };
            parts.push(generator.generate(&real, &z, false, rng)?);
            labels.extend_from_slice(&episode.support_labels);
        }
        Ok((ops::concat(&parts, 0), labels))
    }

    /// Class probabilities `[Q, way]` for the episode's queries given a
    /// prepared support pool. Support and queries share one embedding
    /// pass so batch statistics agree.
    pub fn classify<R: Rng>(
        &mut self,
        episode: &Episode,
        support: &Tensor<T>,
        support_labels: &[usize],
        training: bool,
        _rng: &mut R,
    ) -> Result<Tensor<T>> {
        let shape = self.embed.spec().image_shape;
        let refs: Vec<&[f32]> = episode.query_images.iter().map(Vec::as_slice).collect();
        let queries = batch_tensor::<T>(&refs, shape);
        let s = support.shape()[0];
        let q = queries.shape()[0];
        let all = ops::concat(&[support.clone(), queries], 0);
        let embs = self.embed.forward(&all, training)?;
        let d = self.embed.spec().embed_dim();
        let support_embs = ops::narrow(&embs, 0, 0, s);
        let query_embs = ops::narrow(&embs, 0, s, q);
        debug_assert_eq!(support_embs.shape(), [s, d]);
        attention_classify(&query_embs, &support_embs, support_labels, episode.way)
    }
}

/// Mean negative log probability of the true classes.
fn episode_loss<T: Scalar>(probs: &Tensor<T>, labels: &[usize], way: usize) -> Result<Tensor<T>> {
    let q = probs.shape()[0];
    if labels.len() != q {
        return Err(data_err!("{q} queries but {} labels", labels.len()));
    }
    let mut onehot = vec![T::zero(); q * way];
    for (i, &l) in labels.iter().enumerate() {
        onehot[i * way + l] = T::one();
    }
    let mask = Tensor::from_vec(&[q, way], onehot);
    let picked = ops::sum_axes(&ops::mul(probs, &mask), &[1], false);
    Ok(ops::neg(&ops::mean_all(&ops::ln(&ops::add_scalar(
        &picked,
        T::cast(1e-12),
    )))))
}

fn accuracy_from_probs<T: Scalar>(probs: &Tensor<T>, labels: &[usize], way: usize) -> f64 {
    let flat = probs.to_vec();
    let mut correct = 0usize;
    for (i, &l) in labels.iter().enumerate() {
        let row = &flat[i * way..(i + 1) * way];
        let pred = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(j, _)| j)
            .unwrap_or(0);
        if pred == l {
            correct += 1;
        }
    }
    correct as f64 / labels.len().max(1) as f64
}

// ---------------------------------------------------------------------------
// Training

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchnetConfig {
    pub embed: EmbedSpec,
    pub episodes: usize,
    pub way: usize,
    pub shot: usize,
    pub query_per_class: usize,
    /// Generated images stacked per support item; 0, 1, or 2.
    pub k_augment: usize,
    pub use_selector: bool,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Validation cadence (in episodes) and episode count per check.
    pub val_every: usize,
    pub val_episodes: usize,
    pub seed: u64,
}

impl Default for MatchnetConfig {
    fn default() -> Self {
        MatchnetConfig {
            embed: EmbedSpec::default(),
            episodes: 1000,
            way: 20,
            shot: 1,
            query_per_class: 1,
            k_augment: 0,
            use_selector: false,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            val_every: 50,
            val_episodes: 20,
            seed: 0,
        }
    }
}

impl MatchnetConfig {
    pub fn validate(&self) -> Result<()> {
        self.embed.validate()?;
        if self.way < 2 || self.shot == 0 || self.query_per_class == 0 {
            return Err(config_err!("episodes need way ≥ 2, shot ≥ 1, queries ≥ 1"));
        }
        if self.k_augment > 2 {
            return Err(config_err!("k_augment ranges over 0..=2, got {}", self.k_augment));
        }
        if self.episodes == 0 || self.val_every == 0 || self.val_episodes == 0 {
            return Err(config_err!("episode counts must be positive"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(config_err!("lr must be positive"));
        }
        Ok(())
    }
}

pub struct TrainedMatchnet<T: Scalar> {
    pub model: Matchnet<T>,
    pub episodes_trained: usize,
    pub best_val_accuracy: Option<f64>,
    /// True when training stopped early on a non-finite loss; the model
    /// carries the last selected (or initial) parameters.
    pub aborted_nonfinite: bool,
}

fn state_snapshot<T: Scalar>(model: &Matchnet<T>) -> Vec<(String, Vec<T>)> {
    model
        .named_params()
        .into_iter()
        .chain(model.named_buffers())
        .map(|(n, t)| (n, t.to_vec()))
        .collect()
}

fn state_restore<T: Scalar>(model: &Matchnet<T>, state: &[(String, Vec<T>)]) {
    let live: Vec<(String, Tensor<T>)> =
        model.named_params().into_iter().chain(model.named_buffers()).collect();
    for ((name, data), (live_name, tensor)) in state.iter().zip(&live) {
        debug_assert_eq!(name, live_name);
        tensor.data_mut().iter_mut().zip(data).for_each(|(d, &s)| *d = s);
    }
}

/// Episodic training on the source domain. Validation-domain episodes
/// (same augmentation setting) select the best parameter snapshot; if
/// the dataset has no usable validation domain the final parameters
/// stand. A non-finite loss stops training and keeps the best snapshot
/// rather than discarding the run.
pub fn train_matchnet<T: Scalar>(
    data: &LabeledImageSet,
    cfg: &MatchnetConfig,
    mut dagan: Option<&mut Generator<T>>,
) -> Result<TrainedMatchnet<T>> {
    cfg.validate()?;
    if cfg.embed.image_shape != data.shape {
        return Err(config_err!(
            "embed spec {:?} vs dataset {:?}",
            cfg.embed.image_shape,
            data.shape
        ));
    }
    if (cfg.k_augment > 0 || cfg.use_selector) && dagan.is_none() {
        return Err(config_err!("augmented episodes need a trained generator"));
    }
    let mut rng = seeded_rng(cfg.seed);
    let selector_z = if cfg.use_selector {
        Some(dagan.as_deref().expect("checked").spec().z_dim)
    } else {
        None
    };
    let mut model = Matchnet::build(cfg.embed.clone(), selector_z, &mut rng)?;
    let mut opt = Adam::new(model.named_params(), cfg.lr, cfg.beta1, cfg.beta2);

    // Frozen contract: the generator's parameters take no gradient for
    // the whole run.
    let frozen: Vec<Tensor<T>> = dagan
        .as_deref()
        .map(|g| g.named_params().into_iter().map(|(_, p)| p).collect())
        .unwrap_or_default();
    for p in &frozen {
        p.set_requires_grad(false);
    }
    let unfreeze = |frozen: &[Tensor<T>]| {
        for p in frozen {
            p.set_requires_grad(true);
        }
    };

    let mut best: Option<(f64, Vec<(String, Vec<T>)>)> = None;
    let mut aborted = false;
    let mut trained = 0usize;
    for episode_index in 0..cfg.episodes {
        let episode =
            make_episode(data, Domain::Source, cfg.way, cfg.shot, cfg.query_per_class, &mut rng)?;
        let pool = dagan.as_deref_mut().map(|g| (g, cfg.k_augment));
        let (support, labels) = model.support_pool(&episode, pool, true, &mut rng)?;
        opt.zero_grads();
        let probs = model.classify(&episode, &support, &labels, true, &mut rng)?;
        let loss = episode_loss(&probs, &episode.query_labels, episode.way)?;
        let lv = loss.item().as_f64();
        if !lv.is_finite() {
            aborted = true;
            break;
        }
        backward(&loss)?;
        opt.step()?;
        trained += 1;

        let due = (episode_index + 1) % cfg.val_every == 0 || episode_index + 1 == cfg.episodes;
        if due {
            let mut vrng = seeded_rng(cfg.seed ^ (episode_index as u64 + 1).wrapping_mul(0x517c_c1b7_2722_0a95));
            if let Some(acc) = validation_accuracy(&mut model, data, cfg, &mut dagan, &mut vrng)? {
                if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                    best = Some((acc, state_snapshot(&model)));
                }
            }
        }
    }
    if let Some((_, state)) = &best {
        state_restore(&model, state);
    }
    unfreeze(&frozen);
    if trained == 0 && aborted {
        return Err(train_err!("matchnet loss non-finite on the first episode"));
    }
    Ok(TrainedMatchnet {
        model,
        episodes_trained: trained,
        best_val_accuracy: best.map(|(a, _)| a),
        aborted_nonfinite: aborted,
    })
}

fn validation_accuracy<T: Scalar>(
    model: &mut Matchnet<T>,
    data: &LabeledImageSet,
    cfg: &MatchnetConfig,
    dagan: &mut Option<&mut Generator<T>>,
    rng: &mut ChaCha8Rng,
) -> Result<Option<f64>> {
    let need = cfg.shot + cfg.query_per_class;
    let usable = data
        .classes_in(Domain::Validation)
        .into_iter()
        .filter(|&k| data.classes[k].images.len() >= need)
        .count();
    if usable < cfg.way {
        return Ok(None);
    }
    let _guard = NoGradGuard::new();
    let mut accs = Vec::with_capacity(cfg.val_episodes);
    for _ in 0..cfg.val_episodes {
        let episode =
            make_episode(data, Domain::Validation, cfg.way, cfg.shot, cfg.query_per_class, rng)?;
        let pool = dagan.as_deref_mut().map(|g| (g, cfg.k_augment));
        let (support, labels) = model.support_pool(&episode, pool, false, rng)?;
        let probs = model.classify(&episode, &support, &labels, false, rng)?;
        accs.push(accuracy_from_probs(&probs, &episode.query_labels, episode.way));
    }
    Ok(Some(accs.iter().sum::<f64>() / accs.len() as f64))
}

// ---------------------------------------------------------------------------
// Baselines and evaluation

/// Nearest support item by Euclidean pixel distance; exact ties go to
/// the smaller class index.
pub fn pixel_distance_classify(
    query: &[f32],
    support_images: &[Vec<f32>],
    support_labels: &[usize],
) -> Result<usize> {
    if support_images.is_empty() || support_images.len() != support_labels.len() {
        return Err(data_err!(
            "{} support images vs {} labels",
            support_images.len(),
            support_labels.len()
        ));
    }
    let mut best: Option<(f64, usize)> = None;
    for (img, &label) in support_images.iter().zip(support_labels) {
        if img.len() != query.len() {
            return Err(data_err!(
                "support image has {} pixels, query {}",
                img.len(),
                query.len()
            ));
        }
        let d: f64 = img
            .iter()
            .zip(query)
            .map(|(a, b)| ((a - b) as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        let better = match best {
            None => true,
            Some((bd, bl)) => d < bd || (d == bd && label < bl),
        };
        if better {
            best = Some((d, label));
        }
    }
    Ok(best.expect("nonempty support").1)
}

#[derive(Clone, Debug)]
pub struct OneShotReport {
    pub technique: String,
    pub test_accuracy: f64,
    pub stderr: f64,
    pub episodes: usize,
}

/// Evaluates over seeded episodes from `domain`, reporting mean accuracy
/// and the standard error over episodes. With `matchnet` absent the
/// pixel-distance baseline runs instead; `dagan` (with its K) extends
/// every support pool either way.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_oneshot<T: Scalar>(
    mut matchnet: Option<&mut Matchnet<T>>,
    data: &LabeledImageSet,
    domain: Domain,
    way: usize,
    shot: usize,
    query_per_class: usize,
    episodes: usize,
    mut dagan: Option<(&mut Generator<T>, usize)>,
    seed: u64,
) -> Result<OneShotReport> {
    if episodes == 0 {
        return Err(config_err!("evaluation needs at least one episode"));
    }
    let technique = match (&matchnet, &dagan) {
        (Some(_), Some(_)) => "matchnet_dagan",
        (Some(_), None) => "matchnet",
        (None, Some(_)) => "pixel_distance_dagan",
        (None, None) => "pixel_distance",
    };
    let shape = data.shape;
    let mut rng = seeded_rng(seed);
    let _guard = NoGradGuard::new();
    let mut accs = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let episode = make_episode(data, domain, way, shot, query_per_class, &mut rng)?;
        match matchnet.as_deref_mut() {
            Some(model) => {
                let pool = dagan.as_mut().map(|(g, k)| (&mut **g, *k));
                let (support, labels) = model.support_pool(&episode, pool, false, &mut rng)?;
                let probs = model.classify(&episode, &support, &labels, false, &mut rng)?;
                accs.push(accuracy_from_probs(&probs, &episode.query_labels, episode.way));
            }
            None => {
                let mut images = episode.support_images.clone();
                let mut labels = episode.support_labels.clone();
                if let Some((generator, k)) = dagan.as_mut() {
                    let refs: Vec<&[f32]> =
                        episode.support_images.iter().map(Vec::as_slice).collect();
                    let real = batch_tensor::<T>(&refs, shape);
                    for _ in 0..*k {
                        let z =
                            sample_z::<T>(episode.support_images.len(), generator.spec().z_dim, &mut rng);
                        let fake = generator.generate(&real, &z, false, &mut rng)?;
                        let flat = fake.to_vec();
                        let per = shape.len();
                        for (i, &l) in episode.support_labels.iter().enumerate() {
                            images.push(
                                flat[i * per..(i + 1) * per]
                                    .iter()
                                    .map(|v| v.as_f64() as f32)
                                    .collect(),
                            );
                            labels.push(l);
                        }
                    }
                }
                let mut correct = 0usize;
                for (q, &l) in episode.query_images.iter().zip(&episode.query_labels) {
                    if pixel_distance_classify(q, &images, &labels)? == l {
                        correct += 1;
                    }
                }
                accs.push(correct as f64 / episode.query_labels.len() as f64);
            }
        }
    }
    let n = accs.len();
    let mean = accs.iter().sum::<f64>() / n as f64;
    let stderr = if n < 2 {
        0.0
    } else {
        let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    };
    Ok(OneShotReport {
        technique: technique.to_string(),
        test_accuracy: mean,
        stderr,
        episodes: n,
    })
}

pub fn write_oneshot_csv(path: &Path, reports: &[OneShotReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["technique", "test_accuracy", "stderr", "episodes"])?;
    for r in reports {
        w.write_record([
            r.technique.clone(),
            r.test_accuracy.to_string(),
            r.stderr.to_string(),
            r.episodes.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
