//! The adversarial training loop: per batch one critic step, with a
//! generator step folded in every `critic_iters_per_gen` batches; per
//! epoch a metrics row, a `latest.dgck` checkpoint, and — when the split
//! has a validation domain — a `best.dgck` refresh whenever the
//! validation-domain Wasserstein estimate improves.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use dagan_nn::rng::seeded_rng;
use dagan_nn::{backward, Adam, Scalar};

use crate::critic::Critic;
use crate::data::{batch_tensor, CaseTag, Domain, LabeledImageSet};
use crate::error::{data_err, train_err, Result};
use crate::generator::{sample_z, Generator};
use crate::trainer::checkpoint::{self, Checkpoint};
use crate::trainer::losses::{audit_loss_leaves, critic_loss, generator_loss, sample_partner};
use crate::trainer::{DaganConfig, EpochMetrics, TrainReport};

/// Fraction of total critic steps over which the renorm correction
/// limits ramp from plain batch norm to their full values.
pub const RENORM_RAMP_FRACTION: f64 = 0.25;
pub const RENORM_R_MAX: f64 = 3.0;
pub const RENORM_D_MAX: f64 = 5.0;

/// Validation batches per epoch for checkpoint selection.
const VAL_BATCHES: usize = 4;

pub const LATEST_CHECKPOINT: &str = "latest.dgck";
pub const BEST_CHECKPOINT: &str = "best.dgck";
pub const METRICS_FILE: &str = "metrics.csv";

pub fn renorm_limits(step: u64, total_steps: u64) -> (f64, f64) {
    let ramp = (total_steps as f64 * RENORM_RAMP_FRACTION).max(1.0);
    let f = (step as f64 / ramp).min(1.0);
    (1.0 + (RENORM_R_MAX - 1.0) * f, RENORM_D_MAX * f)
}

/// Trains from scratch, seeding the run RNG from the config. The models
/// arrive pre-built (and already initialized); optimizers are fresh.
pub fn train<T: Scalar>(
    cfg: &DaganConfig,
    data: &LabeledImageSet,
    generator: &mut Generator<T>,
    critic: &mut Critic<T>,
    out_dir: &Path,
) -> Result<TrainReport> {
    train_until(cfg, data, generator, critic, out_dir, None)
}

/// Like [`train`], but pauses once `stop_after` epochs finish, leaving
/// `latest.dgck` ready for [`resume_training`] — for splitting a long run
/// across scheduler slots. Schedules (the renorm ramp) still follow the
/// full configured horizon, so pause-and-resume matches an uninterrupted
/// run step for step.
pub fn train_until<T: Scalar>(
    cfg: &DaganConfig,
    data: &LabeledImageSet,
    generator: &mut Generator<T>,
    critic: &mut Critic<T>,
    out_dir: &Path,
    stop_after: Option<u64>,
) -> Result<TrainReport> {
    cfg.train.validate()?;
    let t = &cfg.train;
    let mut opt_gen = Adam::new(generator.named_params(), t.lr, t.beta1, t.beta2);
    let mut opt_critic = Adam::new(critic.named_params(), t.lr, t.beta1, t.beta2);
    let mut rng = seeded_rng(t.seed);
    let mut step = 0u64;
    run_epochs(
        cfg, data, generator, critic, &mut opt_gen, &mut opt_critic, &mut rng, &mut step, 0,
        Vec::new(), out_dir, stop_after,
    )
}

/// Picks up where `latest.dgck` left off and runs to the configured epoch
/// count. With the saved RNG stream restored, the combined metric log is
/// identical to an uninterrupted run.
pub fn resume_training<T: Scalar>(
    out_dir: &Path,
    data: &LabeledImageSet,
) -> Result<(TrainReport, Generator<T>, Critic<T>)> {
    let ckpt = Checkpoint::load(&out_dir.join(LATEST_CHECKPOINT))?;
    let cfg = DaganConfig::from_toml(&ckpt.config_echo)?;
    let mut build_rng = seeded_rng(cfg.train.seed);
    let mut generator = Generator::build(cfg.generator.clone(), &mut build_rng)?;
    let mut critic = Critic::build(cfg.critic.clone(), &mut build_rng)?;
    let t = &cfg.train;
    let mut opt_gen = Adam::new(generator.named_params(), t.lr, t.beta1, t.beta2);
    let mut opt_critic = Adam::new(critic.named_params(), t.lr, t.beta1, t.beta2);
    let mut rng =
        checkpoint::restore(&ckpt, &mut generator, &mut critic, &mut opt_gen, &mut opt_critic)?;
    let mut step = ckpt.global_step;
    let metrics = read_metrics(&out_dir.join(METRICS_FILE), ckpt.epoch)?;
    let report = run_epochs(
        &cfg,
        data,
        &mut generator,
        &mut critic,
        &mut opt_gen,
        &mut opt_critic,
        &mut rng,
        &mut step,
        ckpt.epoch,
        metrics,
        out_dir,
        None,
    )?;
    Ok((report, generator, critic))
}

/// `(class, image)` training cases in `domain`, plus per-class training
/// indices. `strict` demands every participating class support pairing.
fn domain_cases(
    data: &LabeledImageSet,
    domain: Domain,
    strict: bool,
) -> Result<(Vec<(usize, usize)>, HashMap<usize, Vec<usize>>)> {
    let mut cases = Vec::new();
    let mut per_class = HashMap::new();
    for (k, class) in data.classes.iter().enumerate() {
        if class.domain != domain {
            continue;
        }
        let train: Vec<usize> = class
            .case_tags
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == CaseTag::Train)
            .map(|(i, _)| i)
            .collect();
        if train.is_empty() {
            continue;
        }
        if train.len() < 2 {
            if strict {
                return Err(data_err!(
                    "class {k} has a single training case; same-class pairing needs two"
                ));
            }
            continue;
        }
        for &i in &train {
            cases.push((k, i));
        }
        per_class.insert(k, train);
    }
    Ok((cases, per_class))
}

#[allow(clippy::too_many_arguments)]
fn run_epochs<T: Scalar>(
    cfg: &DaganConfig,
    data: &LabeledImageSet,
    generator: &mut Generator<T>,
    critic: &mut Critic<T>,
    opt_gen: &mut Adam<T>,
    opt_critic: &mut Adam<T>,
    rng: &mut ChaCha8Rng,
    global_step: &mut u64,
    start_epoch: u64,
    mut metrics: Vec<EpochMetrics>,
    out_dir: &Path,
    stop_after: Option<u64>,
) -> Result<TrainReport> {
    fs::create_dir_all(out_dir)?;
    let t = &cfg.train;
    let shape = data.shape;
    let (mut cases, per_class) = domain_cases(data, Domain::Source, true)?;
    if cases.is_empty() {
        return Err(data_err!("no source-domain training cases to train on"));
    }
    let batches_per_epoch = cases
        .chunks(t.batch_size)
        .filter(|c| c.len() >= 2)
        .count() as u64;
    let total_steps = batches_per_epoch * t.epochs;
    let config_echo = cfg.to_toml()?;

    let gen_ids: HashSet<u64> = generator.named_params().iter().map(|(_, p)| p.id()).collect();
    let critic_ids: HashSet<u64> = critic.named_params().iter().map(|(_, p)| p.id()).collect();
    let mut audit_critic = true;
    let mut audit_gen = true;

    // Best-so-far tracking restarts on resume; best.dgck is only ever
    // overwritten on improvement, so an existing one survives.
    let mut best: Option<(u64, f64)> = None;
    let save = |epoch: u64,
                rng: &ChaCha8Rng,
                generator: &Generator<T>,
                critic: &Critic<T>,
                opt_gen: &Adam<T>,
                opt_critic: &Adam<T>,
                step: u64,
                file: &str|
     -> Result<()> {
        checkpoint::snapshot(
            config_echo.clone(),
            step,
            epoch,
            rng,
            generator,
            critic,
            opt_gen,
            opt_critic,
        )
        .save(&out_dir.join(file))
    };

    // An epoch-0 checkpoint so `epochs = 0` still yields a loadable
    // artifact equal to the initialization.
    save(start_epoch, rng, generator, critic, opt_gen, opt_critic, *global_step, LATEST_CHECKPOINT)?;
    write_metrics(&out_dir.join(METRICS_FILE), &metrics)?;

    let end_epoch = stop_after.map_or(t.epochs, |s| s.min(t.epochs));
    for epoch in start_epoch..end_epoch {
        // Shuffle from canonical order every epoch, not cumulatively, so
        // the order depends only on the rng state — which the checkpoint
        // restores — and never on how many epochs this process ran.
        cases.sort_unstable();
        cases.shuffle(rng);
        let mut critic_losses = Vec::new();
        let mut gen_losses = Vec::new();
        let mut w_batches = Vec::new();
        let mut batch_index = 0usize;
        for chunk in cases.chunks(t.batch_size) {
            if chunk.len() < 2 {
                continue; // renorm and the penalty both need a real batch
            }
            let (r_max, d_max) = renorm_limits(*global_step, total_steps);
            generator.set_renorm_limits(r_max, d_max);

            let xi_refs: Vec<&[f32]> = chunk
                .iter()
                .map(|&(k, i)| data.image(k, i))
                .collect();
            let mut xj_refs: Vec<&[f32]> = Vec::with_capacity(chunk.len());
            for &(k, i) in chunk {
                let j = sample_partner(&per_class[&k], i, rng)?;
                xj_refs.push(data.image(k, j));
            }
            let x_i = batch_tensor::<T>(&xi_refs, shape);
            let x_j = batch_tensor::<T>(&xj_refs, shape);
            let z = sample_z::<T>(chunk.len(), cfg.generator.z_dim, rng);

            opt_critic.zero_grads();
            let parts = critic_loss(critic, generator, &x_i, &x_j, &z, t.gp_lambda, rng)?;
            if audit_critic {
                audit_loss_leaves(&parts.loss, &critic_ids)?;
                audit_critic = false;
            }
            backward(&parts.loss)?;
            let cl = parts.loss.item().as_f64();
            if !cl.is_finite() {
                return Err(train_err!(
                    "critic loss became non-finite at step {}; last good checkpoint retained",
                    *global_step
                ));
            }
            opt_critic.step()?;
            critic_losses.push(cl);
            w_batches
                .push(parts.real_score_mean.item().as_f64() - parts.fake_score_mean.item().as_f64());

            if (batch_index + 1) % t.critic_iters_per_gen == 0 {
                let z2 = sample_z::<T>(chunk.len(), cfg.generator.z_dim, rng);
                opt_gen.zero_grads();
                let gl = generator_loss(critic, generator, &x_i, &z2, rng)?;
                if audit_gen {
                    audit_loss_leaves(&gl, &gen_ids)?;
                    audit_gen = false;
                }
                backward(&gl)?;
                let glv = gl.item().as_f64();
                if !glv.is_finite() {
                    return Err(train_err!(
                        "generator loss became non-finite at step {}; last good checkpoint retained",
                        *global_step
                    ));
                }
                opt_gen.step()?;
                gen_losses.push(glv);
            }
            *global_step += 1;
            batch_index += 1;
        }

        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let row = EpochMetrics {
            epoch: epoch + 1,
            critic_loss: mean(&critic_losses),
            gen_loss: if gen_losses.is_empty() { f64::NAN } else { mean(&gen_losses) },
            wasserstein_estimate: mean(&w_batches).abs(),
        };
        metrics.push(row);

        if let Some(val) = domain_wasserstein(cfg, data, generator, critic, epoch)? {
            if best.map_or(true, |(_, b)| val < b) {
                best = Some((epoch + 1, val));
                save(
                    epoch + 1,
                    rng,
                    generator,
                    critic,
                    opt_gen,
                    opt_critic,
                    *global_step,
                    BEST_CHECKPOINT,
                )?;
            }
        }
        save(
            epoch + 1,
            rng,
            generator,
            critic,
            opt_gen,
            opt_critic,
            *global_step,
            LATEST_CHECKPOINT,
        )?;
        write_metrics(&out_dir.join(METRICS_FILE), &metrics)?;
    }

    Ok(TrainReport {
        metrics,
        best_epoch: best.map(|(e, _)| e),
        best_val_wasserstein: best.map(|(_, v)| v),
    })
}

/// Eval-mode Wasserstein estimate `|E[real] − E[fake]|` over a few
/// batches of the given epoch's validation-domain draw; `None` when the
/// split has no pairable validation classes. Runs on its own RNG stream
/// so it never perturbs training reproducibility.
fn domain_wasserstein<T: Scalar>(
    cfg: &DaganConfig,
    data: &LabeledImageSet,
    generator: &mut Generator<T>,
    critic: &Critic<T>,
    epoch: u64,
) -> Result<Option<f64>> {
    let (mut cases, per_class) = domain_cases(data, Domain::Validation, false)?;
    if cases.len() < 2 {
        return Ok(None);
    }
    let mut rng = seeded_rng(cfg.train.seed ^ (epoch + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    cases.shuffle(&mut rng);
    let _guard = dagan_nn::NoGradGuard::new();
    let mut diffs = Vec::new();
    for chunk in cases.chunks(cfg.train.batch_size).take(VAL_BATCHES) {
        if chunk.len() < 2 {
            continue;
        }
        let xi: Vec<&[f32]> = chunk.iter().map(|&(k, i)| data.image(k, i)).collect();
        let mut xj: Vec<&[f32]> = Vec::with_capacity(chunk.len());
        for &(k, i) in chunk {
            let j = sample_partner(&per_class[&k], i, &mut rng)?;
            xj.push(data.image(k, j));
        }
        let x_i = batch_tensor::<T>(&xi, data.shape);
        let x_j = batch_tensor::<T>(&xj, data.shape);
        let z = sample_z::<T>(chunk.len(), cfg.generator.z_dim, &mut rng);
        let fake = generator.generate(&x_i, &z, false, &mut rng)?;
        let real_s = critic.score(&x_i, &x_j, false, &mut rng)?;
        let fake_s = critic.score(&x_i, &fake, false, &mut rng)?;
        let mean = |t: &dagan_nn::Tensor<T>| {
            t.to_vec().iter().map(|v| v.as_f64()).sum::<f64>() / t.len() as f64
        };
        diffs.push(mean(&real_s) - mean(&fake_s));
    }
    if diffs.is_empty() {
        return Ok(None);
    }
    Ok(Some((diffs.iter().sum::<f64>() / diffs.len() as f64).abs()))
}

pub fn write_metrics(path: &Path, rows: &[EpochMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "critic_loss", "gen_loss", "wasserstein_estimate"])?;
    for r in rows {
        w.write_record([
            r.epoch.to_string(),
            r.critic_loss.to_string(),
            r.gen_loss.to_string(),
            r.wasserstein_estimate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads back up to `limit` epochs of an existing metrics log (resume
/// truncates anything the checkpoint never saw).
fn read_metrics(path: &Path, limit: u64) -> Result<Vec<EpochMetrics>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut reader = csv::Reader::from_path(path)?;
    for record in reader.records() {
        let record = record?;
        let field = |i: usize| -> Result<&str> {
            record
                .get(i)
                .ok_or_else(|| train_err!("metrics row too short: {record:?}"))
        };
        let row = EpochMetrics {
            epoch: field(0)?.parse().map_err(|e| train_err!("bad epoch: {e}"))?,
            critic_loss: parse_f64(field(1)?)?,
            gen_loss: parse_f64(field(2)?)?,
            wasserstein_estimate: parse_f64(field(3)?)?,
        };
        if row.epoch <= limit {
            out.push(row);
        }
    }
    Ok(out)
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|e| train_err!("bad metric value {s:?}: {e}"))
}
