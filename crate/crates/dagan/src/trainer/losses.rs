//! Improved-WGAN losses over same-class pairs. The conditioning image
//! `x_i` rides along into every critic call; class identity never does.
//!
//! The generic `*_term` functions accept any scoring closure so the
//! arithmetic can be pinned against hand-computable mock critics; the
//! concrete `critic_loss`/`generator_loss` wire in the real networks with
//! the right detach/freeze discipline.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dagan_nn::ops;
use dagan_nn::{grad_wrt, reachable_leaves, Scalar, Tensor};

use crate::critic::Critic;
use crate::data::{CaseTag, LabeledImageSet};
use crate::error::{data_err, train_err, Result};
use crate::generator::Generator;

/// Floor added under the squared gradient norm before the square root, so
/// the penalty stays differentiable at zero gradient.
pub const GP_NORM_FLOOR: f64 = 1e-12;

/// Name given to the interpolate leaf inside the gradient penalty; the
/// loss-graph audit treats it as an expected non-parameter leaf.
pub const GP_LEAF_NAME: &str = "gp.x_hat";

/// Uniformly draws an ordered pair of distinct training-case indices from
/// one class. Errors on classes that cannot pair.
pub fn sample_real_pair<R: Rng>(
    set: &LabeledImageSet,
    class_id: usize,
    rng: &mut R,
) -> Result<(usize, usize)> {
    let train = train_indices(set, class_id)?;
    let i = train[rng.random_range(0..train.len())];
    let j = sample_partner(&train, i, rng)?;
    Ok((i, j))
}

/// Draws a training-case index from `train` distinct from `i`.
pub fn sample_partner<R: Rng>(train: &[usize], i: usize, rng: &mut R) -> Result<usize> {
    if train.len() < 2 {
        return Err(data_err!(
            "class has {} training case(s); same-class pairing needs two distinct images — \
             pairing an image with itself is not allowed",
            train.len()
        ));
    }
    let pos_i = train.iter().position(|&x| x == i);
    let mut pos = rng.random_range(0..train.len() - 1);
    if let Some(pi) = pos_i {
        if pos >= pi {
            pos += 1;
        }
    }
    Ok(train[pos])
}

pub fn train_indices(set: &LabeledImageSet, class_id: usize) -> Result<Vec<usize>> {
    let class = set
        .classes
        .get(class_id)
        .ok_or_else(|| data_err!("class {class_id} out of range"))?;
    let train: Vec<usize> = class
        .case_tags
        .iter()
        .enumerate()
        .filter(|(_, &t)| t == CaseTag::Train)
        .map(|(i, _)| i)
        .collect();
    if train.len() < 2 {
        return Err(data_err!(
            "class {class_id} has {} training case(s); same-class pairing needs two distinct \
             images — pairing an image with itself is not allowed",
            train.len()
        ));
    }
    Ok(train)
}

/// The gradient-penalty term: interpolates `x̂ = ε·x_real + (1−ε)·x_fake`
/// with a fresh ε per sample, scores the pair `(x_i, x̂)`, and penalizes
/// the deviation of `‖∇_x̂ score‖₂` from 1, averaged over the batch and
/// scaled by `gp_lambda`. All image inputs are detached internally, so
/// gradient flows only into whatever parameters the scoring closure
/// reads.
pub fn gradient_penalty<T, R, F>(
    mut critic_fn: F,
    x_i: &Tensor<T>,
    x_real: &Tensor<T>,
    x_fake: &Tensor<T>,
    gp_lambda: f64,
    rng: &mut R,
) -> Result<Tensor<T>>
where
    T: Scalar,
    R: Rng,
    F: FnMut(&Tensor<T>, &Tensor<T>) -> Result<Tensor<T>>,
{
    let n = x_real.shape()[0];
    let eps = Tensor::<T>::rand_uniform(&[n, 1, 1, 1], 0.0, 1.0, rng);
    let one_minus = ops::add_scalar(&ops::neg(&eps), T::one());
    let x_hat = ops::add(
        &ops::mulb(&x_real.detach(), &eps),
        &ops::mulb(&x_fake.detach(), &one_minus),
    );
    let x_hat = x_hat.detach().with_requires_grad(true);
    x_hat.set_name(GP_LEAF_NAME);
    let scores = critic_fn(&x_i.detach(), &x_hat)?;
    // Per-sample scores are independent, so the gradient of their sum
    // w.r.t. x̂ stacks the per-sample gradients.
    let grads = grad_wrt(&ops::sum_all(&scores), &[&x_hat], true)?;
    let sq_norm = ops::sum_axes(&ops::square(&grads[0]), &[1, 2, 3], false);
    let norm = ops::sqrt_eps(&sq_norm, GP_NORM_FLOOR);
    let gap = ops::add_scalar(&norm, -T::one());
    Ok(ops::mul_scalar(
        &ops::mean_all(&ops::square(&gap)),
        T::cast(gp_lambda),
    ))
}

/// The three pieces of the critic objective, kept separate so the
/// training loop can log the Wasserstein estimate.
pub struct CriticLossParts<T: Scalar> {
    /// `mean fake score − mean real score + penalty` — what the critic
    /// minimizes.
    pub loss: Tensor<T>,
    pub real_score_mean: Tensor<T>,
    pub fake_score_mean: Tensor<T>,
    pub penalty: Tensor<T>,
}

/// Critic objective from an arbitrary scoring closure and a ready-made
/// (already detached) fake batch.
pub fn critic_loss_term<T, R, F>(
    mut critic_fn: F,
    x_i: &Tensor<T>,
    x_real: &Tensor<T>,
    x_fake: &Tensor<T>,
    gp_lambda: f64,
    rng: &mut R,
) -> Result<CriticLossParts<T>>
where
    T: Scalar,
    R: Rng,
    F: FnMut(&Tensor<T>, &Tensor<T>) -> Result<Tensor<T>>,
{
    let real = ops::mean_all(&critic_fn(x_i, x_real)?);
    let fake = ops::mean_all(&critic_fn(x_i, x_fake)?);
    let penalty = gradient_penalty(&mut critic_fn, x_i, x_real, x_fake, gp_lambda, rng)?;
    let loss = ops::add(&ops::sub(&fake, &real), &penalty);
    Ok(CriticLossParts { loss, real_score_mean: real, fake_score_mean: fake, penalty })
}

/// Generator objective from a scoring closure: `−mean score(x_i, fake)`.
pub fn generator_loss_term<T, F>(mut critic_fn: F, x_i: &Tensor<T>, x_fake: &Tensor<T>) -> Result<Tensor<T>>
where
    T: Scalar,
    F: FnMut(&Tensor<T>, &Tensor<T>) -> Result<Tensor<T>>,
{
    Ok(ops::neg(&ops::mean_all(&critic_fn(x_i, x_fake)?)))
}

/// Derives an independent deterministic stream from `rng` (used when two
/// consumers need randomness inside one expression).
pub fn child_rng<R: Rng>(rng: &mut R) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(rng.next_u64())
}

/// Full critic loss: generates fakes from `(x_i, z)`, detaches them (the
/// generator receives no gradient from this loss), and assembles the
/// Wasserstein + penalty objective.
pub fn critic_loss<T: Scalar, R: Rng>(
    critic: &Critic<T>,
    generator: &mut Generator<T>,
    x_i: &Tensor<T>,
    x_j: &Tensor<T>,
    z: &Tensor<T>,
    gp_lambda: f64,
    rng: &mut R,
) -> Result<CriticLossParts<T>> {
    let mut crng = child_rng(rng);
    let fake = generator.generate(x_i, z, true, rng)?.detach();
    critic_loss_term(
        |a, b| critic.score(a, b, true, &mut crng),
        x_i,
        x_j,
        &fake,
        gp_lambda,
        rng,
    )
}

/// Full generator loss: scores fresh fakes with the critic's parameters
/// frozen for the duration, so backward reaches the generator only.
pub fn generator_loss<T: Scalar, R: Rng>(
    critic: &Critic<T>,
    generator: &mut Generator<T>,
    x_i: &Tensor<T>,
    z: &Tensor<T>,
    rng: &mut R,
) -> Result<Tensor<T>> {
    let mut crng = child_rng(rng);
    let fake = generator.generate(x_i, z, true, rng)?;
    let frozen: Vec<_> = critic
        .named_params()
        .into_iter()
        .map(|(_, p)| p)
        .filter(|p| p.requires_grad())
        .collect();
    for p in &frozen {
        p.set_requires_grad(false);
    }
    let result = generator_loss_term(|a, b| critic.score(a, b, true, &mut crng), x_i, &fake);
    for p in &frozen {
        p.set_requires_grad(true);
    }
    result
}

/// Asserts that every trainable leaf reachable from `loss` is an
/// expected parameter (or the named gradient-penalty interpolate). A
/// label or other stray tensor in the graph fails loudly.
pub fn audit_loss_leaves<T: Scalar>(loss: &Tensor<T>, allowed: &HashSet<u64>) -> Result<()> {
    let mut strays = Vec::new();
    for leaf in reachable_leaves(loss) {
        if !allowed.contains(&leaf.id()) && leaf.name().as_deref() != Some(GP_LEAF_NAME) {
            strays.push(leaf.debug_name());
        }
    }
    if strays.is_empty() {
        Ok(())
    } else {
        Err(train_err!(
            "loss graph reaches tensors that are neither parameters nor the penalty \
             interpolate: {}",
            strays.join(", ")
        ))
    }
}
