//! The vanilla-classifier experiment: a DenseNet trained on one domain's
//! training cases, optionally fed generated same-class variants, each
//! input carrying a real/fake flag as an extra constant channel. Rates
//! are swept and selected on validation cases; test cases are touched
//! exactly once, after selection, and the report keeps an audit counter
//! to prove it.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use dagan_nn::ops::{self, Padding};
use dagan_nn::rng::seeded_rng;
use dagan_nn::{backward, Adam, BatchRenorm, Conv2d, Linear, NoGradGuard, Scalar, Tensor};

use crate::data::{batch_tensor, standard_augment, CaseTag, Domain, ImageShape, LabeledImageSet};
use crate::error::{config_err, data_err, train_err, Result};
use crate::generator::{sample_z, Generator, RENORM_MOMENTUM};

pub const FLAG_REAL: f32 = 1.0;
pub const FLAG_FAKE: f32 = 0.0;

/// Renorm correction limits; fixed from the start (no ramp — the
/// classifier is not adversarial, stability is not an issue).
const CLS_R_MAX: f64 = 3.0;
const CLS_D_MAX: f64 = 5.0;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSpec {
    pub num_dense_blocks: usize,
    pub layers_per_block: usize,
    pub growth_rate: usize,
    /// Dropout at the last conv of each dense block.
    pub dropout_rate: f64,
    pub image_shape: ImageShape,
    /// Softmax width; must equal the class count of the training domain.
    pub num_classes: usize,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec {
            num_dense_blocks: 4,
            layers_per_block: 3,
            growth_rate: 64,
            dropout_rate: 0.5,
            image_shape: ImageShape::new(1, 32, 32),
            num_classes: 0,
        }
    }
}

impl ClassifierSpec {
    /// Miniature spec for fast tests.
    pub fn tiny(num_classes: usize) -> Self {
        ClassifierSpec {
            num_dense_blocks: 2,
            layers_per_block: 2,
            growth_rate: 4,
            dropout_rate: 0.5,
            image_shape: ImageShape::new(1, 8, 8),
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_dense_blocks == 0 || self.layers_per_block == 0 || self.growth_rate == 0 {
            return Err(config_err!("classifier needs at least one block, layer, and filter"));
        }
        if self.num_classes == 0 {
            return Err(config_err!("num_classes must be set"));
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

/// How generated data enters training. `rate` counts generated variants
/// per real example per epoch; `ablate_flag` forces the real/fake
/// channel to 1.0 everywhere so the flag's contribution is measurable.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationPolicy {
    pub rate: usize,
    pub ablate_flag: bool,
}

impl AugmentationPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.rate > 10 {
            return Err(config_err!("augmentation rate capped at 10, got {}", self.rate));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierTrainConfig {
    pub epochs: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        ClassifierTrainConfig {
            epochs: 200,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.99,
            batch_size: 64,
            seed: 0,
        }
    }
}

/// Renorm → ReLU → conv composite (batch statistics are fine here; only
/// the critic must avoid them).
struct Composite<T: Scalar> {
    brn: BatchRenorm<T>,
    conv: Conv2d<T>,
}

impl<T: Scalar> Composite<T> {
    fn new(in_c: usize, out_c: usize, ksize: usize, rng: &mut impl Rng) -> Self {
        let mut brn = BatchRenorm::new(in_c, RENORM_MOMENTUM);
        brn.set_limits(CLS_R_MAX, CLS_D_MAX);
        Composite { brn, conv: Conv2d::new(in_c, out_c, ksize, 1, Padding::Same, true, rng) }
    }

    fn forward(&mut self, x: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        let x = self.brn.forward(x, training)?;
        Ok(self.conv.forward(&ops::relu(&x))?)
    }

    fn named_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.brn.named_params(&format!("{prefix}.brn"), out);
        self.conv.named_params(&format!("{prefix}.conv"), out);
    }
}

pub struct Classifier<T: Scalar> {
    spec: ClassifierSpec,
    blocks: Vec<Vec<Composite<T>>>,
    transitions: Vec<Composite<T>>,
    head: Linear<T>,
}

pub type Classifier32 = Classifier<f32>;
pub type Classifier64 = Classifier<f64>;

impl<T: Scalar> Classifier<T> {
    pub fn build(spec: ClassifierSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let k = spec.growth_rate;
        // Image channels plus the real/fake flag plane.
        let mut channels = spec.image_shape.c + 1;
        let mut blocks = Vec::with_capacity(spec.num_dense_blocks);
        let mut transitions = Vec::with_capacity(spec.num_dense_blocks);
        for _ in 0..spec.num_dense_blocks {
            let mut layers = Vec::with_capacity(spec.layers_per_block);
            for i in 0..spec.layers_per_block {
                layers.push(Composite::new(channels + i * k, k, 3, rng));
            }
            blocks.push(layers);
            channels += spec.layers_per_block * k;
            let out_c = (channels as f64 * crate::critic::TRANSITION_COMPRESSION).floor() as usize;
            transitions.push(Composite::new(channels, out_c, 1, rng));
            channels = out_c;
        }
        let head = Linear::new(channels, spec.num_classes, true, rng);
        Ok(Classifier { spec, blocks, transitions, head })
    }

    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    /// Countable layers: every conv plus the softmax (classification)
    /// layer. The default spec lands on 17.
    pub fn layer_count(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum::<usize>() + self.transitions.len() + 1
    }

    /// Logits `[N, num_classes]`. `flags` carries the per-sample
    /// real/fake value, injected as a constant channel.
    pub fn forward<R: Rng>(
        &mut self,
        x: &Tensor<T>,
        flags: &[f32],
        training: bool,
        rng: &mut R,
    ) -> Result<Tensor<T>> {
        let ImageShape { c, h, w } = self.spec.image_shape;
        let n = x.shape()[0];
        if x.ndim() != 4 || x.shape()[1..] != [c, h, w] || flags.len() != n {
            return Err(data_err!(
                "classifier input {:?} with {} flags does not fit {:?}",
                x.shape(),
                flags.len(),
                self.spec.image_shape
            ));
        }
        let mut plane = Vec::with_capacity(n * h * w);
        for &f in flags {
            plane.extend(std::iter::repeat_n(T::cast(f as f64), h * w));
        }
        let flag_plane = Tensor::from_vec(&[n, 1, h, w], plane);
        let mut cur = ops::concat(&[x.clone(), flag_plane], 1);
        let last = self.spec.layers_per_block - 1;
        for b in 0..self.blocks.len() {
            let mut feats = vec![cur];
            for (i, layer) in self.blocks[b].iter_mut().enumerate() {
                let cat = if feats.len() == 1 { feats[0].clone() } else { ops::concat(&feats, 1) };
                let mut out = layer.forward(&cat, training)?;
                if i == last {
                    out = ops::dropout(&out, self.spec.dropout_rate, training, rng);
                }
                feats.push(out);
            }
            let block_out = ops::concat(&feats, 1);
            cur = self.transitions[b].forward(&block_out, training)?;
            cur = ops::avg_pool2(&cur)?;
        }
        let pooled = ops::global_avg_pool(&cur)?;
        Ok(self.head.forward(&pooled)?)
    }

    pub fn named_params(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        for (b, block) in self.blocks.iter().enumerate() {
            for (i, layer) in block.iter().enumerate() {
                layer.named_params(&format!("block.{b}.{i}"), &mut out);
            }
            self.transitions[b].named_params(&format!("transition.{b}"), &mut out);
        }
        self.head.named_params("head", &mut out);
        out
    }
}

/// A trained classifier plus the bookkeeping the protocol audits need.
pub struct TrainedClassifier<T: Scalar> {
    pub model: Classifier<T>,
    /// Dataset class index behind each softmax slot (ascending).
    pub class_map: Vec<usize>,
    pub domain: Domain,
    pub policy: AugmentationPolicy,
    /// How many times the generator ran during training; provably zero
    /// when `policy.rate == 0`.
    pub generator_invocations: u64,
    pub final_train_loss: f64,
    /// Number of test-tag evaluations this classifier has served.
    pub test_evaluations: u64,
}

/// One training item: pixels, softmax slot, real/fake flag.
type Item = (Vec<f32>, usize, f32);

/// Trains a classifier on `domain`'s training cases. With `policy.rate
/// > 0` every real example also contributes that many generated
/// variants per epoch (fresh z each time, flag 0); standard augmentation
/// applies to real and generated inputs alike.
pub fn train_classifier<T: Scalar>(
    spec: &ClassifierSpec,
    data: &LabeledImageSet,
    domain: Domain,
    policy: &AugmentationPolicy,
    mut dagan: Option<&mut Generator<T>>,
    cfg: &ClassifierTrainConfig,
) -> Result<TrainedClassifier<T>> {
    spec.validate()?;
    policy.validate()?;
    if policy.rate > 0 && dagan.is_none() {
        return Err(config_err!(
            "augmentation rate {} needs a trained generator checkpoint",
            policy.rate
        ));
    }
    let class_map = data.classes_in(domain);
    if class_map.is_empty() {
        return Err(data_err!("no classes in the requested domain"));
    }
    if spec.num_classes != class_map.len() {
        return Err(config_err!(
            "spec says {} classes but the domain has {}",
            spec.num_classes,
            class_map.len()
        ));
    }
    if spec.image_shape != data.shape {
        return Err(config_err!(
            "spec image shape {:?} vs dataset {:?}",
            spec.image_shape,
            data.shape
        ));
    }
    if let Some(gen) = dagan.as_deref() {
        if gen.spec().image_shape != data.shape {
            return Err(config_err!(
                "generator image shape {:?} vs dataset {:?}",
                gen.spec().image_shape,
                data.shape
            ));
        }
    }

    let mut cases: Vec<(usize, usize)> = Vec::new();
    for (slot, &class) in class_map.iter().enumerate() {
        for (i, &tag) in data.classes[class].case_tags.iter().enumerate() {
            if tag == CaseTag::Train {
                cases.push((slot, i));
            }
        }
    }
    if cases.is_empty() {
        return Err(data_err!("domain has no training cases"));
    }

    let mut rng = seeded_rng(cfg.seed);
    let mut model = Classifier::build(spec.clone(), &mut rng)?;
    let mut opt = Adam::new(model.named_params(), cfg.lr, cfg.beta1, cfg.beta2);
    let mut generator_invocations = 0u64;
    let mut final_loss = f64::NAN;

    for _epoch in 0..cfg.epochs {
        let mut items: Vec<Item> = Vec::with_capacity(cases.len() * (1 + policy.rate));
        for &(slot, i) in &cases {
            items.push((data.image(class_map[slot], i).to_vec(), slot, FLAG_REAL));
        }
        if policy.rate > 0 {
            let gen = dagan.as_deref_mut().expect("checked above");
            let _guard = NoGradGuard::new();
            for chunk in cases.chunks(16) {
                let refs: Vec<&[f32]> =
                    chunk.iter().map(|&(s, i)| data.image(class_map[s], i)).collect();
                let x = batch_tensor::<T>(&refs, data.shape);
                for _ in 0..policy.rate {
                    let z = sample_z::<T>(chunk.len(), gen.spec().z_dim, &mut rng);
                    let fake = gen.generate(&x, &z, false, &mut rng)?;
                    generator_invocations += 1;
                    let flat = fake.to_vec();
                    let per = data.shape.len();
                    for (n, &(slot, _)) in chunk.iter().enumerate() {
                        let pixels: Vec<f32> = flat[n * per..(n + 1) * per]
                            .iter()
                            .map(|v| v.as_f64() as f32)
                            .collect();
                        items.push((pixels, slot, FLAG_FAKE));
                    }
                }
            }
        }
        for item in &mut items {
            item.0 = standard_augment(&item.0, data.shape, &mut rng);
            if policy.ablate_flag {
                item.2 = FLAG_REAL;
            }
        }
        items.shuffle(&mut rng);

        let mut losses = Vec::new();
        for batch in items.chunks(cfg.batch_size) {
            if batch.len() < 2 {
                continue; // renorm needs a real batch
            }
            let refs: Vec<&[f32]> = batch.iter().map(|(px, _, _)| px.as_slice()).collect();
            let x = batch_tensor::<T>(&refs, data.shape);
            let labels: Vec<usize> = batch.iter().map(|&(_, slot, _)| slot).collect();
            let flags: Vec<f32> = batch.iter().map(|&(_, _, f)| f).collect();
            opt.zero_grads();
            let logits = model.forward(&x, &flags, true, &mut rng)?;
            let loss = ops::cross_entropy(&logits, &labels)?;
            backward(&loss)?;
            let lv = loss.item().as_f64();
            if !lv.is_finite() {
                return Err(train_err!("classifier loss became non-finite"));
            }
            opt.step()?;
            losses.push(lv);
        }
        if !losses.is_empty() {
            final_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        }
    }

    Ok(TrainedClassifier {
        model,
        class_map,
        domain,
        policy: *policy,
        generator_invocations,
        final_train_loss: final_loss,
        test_evaluations: 0,
    })
}

/// Top-1 accuracy over the classifier's domain cases carrying `tag`.
/// No augmentation; every input is real (flag 1). Test-tag calls bump
/// the audit counter.
pub fn evaluate<T: Scalar>(
    trained: &mut TrainedClassifier<T>,
    data: &LabeledImageSet,
    tag: CaseTag,
) -> Result<f64> {
    let mut cases: Vec<(usize, usize)> = Vec::new();
    for (slot, &class) in trained.class_map.iter().enumerate() {
        for (i, &t) in data.classes[class].case_tags.iter().enumerate() {
            if t == tag {
                cases.push((slot, i));
            }
        }
    }
    if cases.is_empty() {
        return Err(data_err!("no cases tagged {tag:?} to evaluate on"));
    }
    if tag == CaseTag::Test {
        trained.test_evaluations += 1;
    }
    let _guard = NoGradGuard::new();
    let mut rng = seeded_rng(0); // eval mode never draws from it
    let mut correct = 0usize;
    for batch in cases.chunks(64) {
        let refs: Vec<&[f32]> =
            batch.iter().map(|&(s, i)| data.image(trained.class_map[s], i)).collect();
        let x = batch_tensor::<T>(&refs, data.shape);
        let flags = vec![FLAG_REAL; batch.len()];
        let logits = trained.model.forward(&x, &flags, false, &mut rng)?;
        let flat = logits.to_vec();
        let k = trained.class_map.len();
        for (n, &(slot, _)) in batch.iter().enumerate() {
            let row = &flat[n * k..(n + 1) * k];
            let pred = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                .map(|(i, _)| i)
                .unwrap_or(0);
            if pred == slot {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / cases.len() as f64)
}

#[derive(Clone, Debug)]
pub struct SweepEntry {
    pub rate: usize,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    pub selected_rate: usize,
    pub test_accuracy: f64,
    /// Audit: test evaluations across the whole sweep; the protocol
    /// demands exactly 1.
    pub test_evaluations: u64,
}

/// Trains one classifier per rate, selects by validation accuracy (ties
/// go to the smaller rate), and reports the selected model's test
/// accuracy — the only test evaluation in the sweep.
pub fn sweep_augmentation_rate<T: Scalar>(
    spec: &ClassifierSpec,
    data: &LabeledImageSet,
    domain: Domain,
    rates: &[usize],
    mut dagan: Option<&mut Generator<T>>,
    ablate_flag: bool,
    cfg: &ClassifierTrainConfig,
) -> Result<SweepReport> {
    if rates.is_empty() {
        return Err(config_err!("rate sweep needs at least one rate"));
    }
    let mut rates = rates.to_vec();
    rates.sort_unstable();
    rates.dedup();

    let mut entries = Vec::with_capacity(rates.len());
    let mut best: Option<(usize, f64, TrainedClassifier<T>)> = None;
    for &rate in &rates {
        let policy = AugmentationPolicy { rate, ablate_flag };
        let mut trained =
            train_classifier(spec, data, domain, &policy, dagan.as_deref_mut(), cfg)?;
        let val = evaluate(&mut trained, data, CaseTag::Val)?;
        entries.push(SweepEntry { rate, val_accuracy: val });
        // Strict improvement keeps the smallest rate on ties (ascending order).
        if best.as_ref().is_none_or(|(_, b, _)| val > *b) {
            best = Some((rate, val, trained));
        }
    }
    let (selected_rate, _, mut winner) = best.expect("nonempty rates");
    let test_accuracy = evaluate(&mut winner, data, CaseTag::Test)?;
    Ok(SweepReport {
        entries,
        selected_rate,
        test_accuracy,
        test_evaluations: winner.test_evaluations,
    })
}

/// One line of the experiment report.
#[derive(Clone, Debug)]
pub struct ReportRow {
    pub experiment_id: String,
    pub samples_per_class: usize,
    pub test_accuracy: f64,
}

pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["experiment_id", "samples_per_class", "test_accuracy"])?;
    for r in rows {
        w.write_record([
            r.experiment_id.clone(),
            r.samples_per_class.to_string(),
            r.test_accuracy.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
