//! One-shot harness: embedding arithmetic, attention oracles, episode
//! protocol, the frozen-generator contract, and baseline behavior.

use std::cell::RefCell;

use dagan::data::{CaseTag, ClassRecord, Domain, ImageShape, LabeledImageSet};
use dagan::generator::{Generator32, GeneratorSpec};
use dagan::matchnet::{
    attention_classify, evaluate_oneshot, make_episode, pixel_distance_classify, train_matchnet,
    write_oneshot_csv, EmbedNet, EmbedSpec, Matchnet, Matchnet32, MatchnetConfig, OneShotReport,
    SelectorNet, SelectorSpec,
};
use dagan_nn::rng::seeded_rng;
use dagan_nn::{grad_check, ops, Tensor};
use rand::Rng;

/// Thirteen brightness-level classes split 6 Source / 4 Validation /
/// 3 Target, six 8×8 images each. Levels sit 0.055 apart with ±0.01
/// noise, so pixel distance separates classes by a wide margin.
fn toy_world(seed: u64) -> LabeledImageSet {
    let mut rng = seeded_rng(seed);
    let shape = ImageShape::new(1, 8, 8);
    let mut classes = Vec::new();
    for k in 0..13usize {
        let domain = match k {
            0..=5 => Domain::Source,
            6..=9 => Domain::Validation,
            _ => Domain::Target,
        };
        let base = 0.08 + 0.055 * k as f32;
        let mut images = Vec::new();
        for _ in 0..6 {
            images.push(
                (0..64)
                    .map(|_| (base + rng.random_range(-0.01..0.01f32)).clamp(0.0, 1.0))
                    .collect(),
            );
        }
        classes.push(ClassRecord {
            images,
            domain,
            case_tags: vec![CaseTag::Train; 6],
            original_class: k,
        });
    }
    LabeledImageSet { shape, classes }
}

/// Six target classes that are pure noise around 0.5 — indistinguishable
/// by construction, so any classifier sits at chance.
fn noise_world(seed: u64) -> LabeledImageSet {
    let mut rng = seeded_rng(seed);
    let shape = ImageShape::new(1, 8, 8);
    let classes = (0..6usize)
        .map(|k| ClassRecord {
            images: (0..6)
                .map(|_| {
                    (0..64)
                        .map(|_| (0.5 + rng.random_range(-0.3..0.3f32)).clamp(0.0, 1.0))
                        .collect()
                })
                .collect(),
            domain: Domain::Target,
            case_tags: vec![CaseTag::Train; 6],
            original_class: k,
        })
        .collect();
    LabeledImageSet { shape, classes }
}

// ---------------------------------------------------------------------------
// Embedding network

#[test]
fn embed_dim_matches_the_flattened_feature_map() {
    // 64 filters over 32×32 quartered four times → 64·2·2.
    assert_eq!(EmbedSpec::default().embed_dim(), 256);
    assert_eq!(EmbedSpec::tiny().embed_dim(), 16);

    let mut net = EmbedNet::<f32>::build(EmbedSpec::tiny(), &mut seeded_rng(0)).unwrap();
    let x = Tensor::rand_uniform(&[3, 1, 8, 8], 0.0, 1.0, &mut seeded_rng(1));
    let out = net.forward(&x, true).unwrap();
    assert_eq!(out.shape(), [3, 16]);
    assert!(out.to_vec().iter().all(|v| v.is_finite()));
}

#[test]
fn identical_inputs_embed_identically() {
    let mut net = EmbedNet::<f32>::build(EmbedSpec::tiny(), &mut seeded_rng(2)).unwrap();
    let mut rng = seeded_rng(3);
    let a: Vec<f32> = (0..64).map(|_| rng.random_range(0.0..1.0)).collect();
    let b: Vec<f32> = (0..64).map(|_| rng.random_range(0.0..1.0)).collect();
    let mut px = a.clone();
    px.extend(&b);
    px.extend(&a);
    let x = Tensor::from_vec(&[3, 1, 8, 8], px);
    let rows: Vec<f32> = net.forward(&x, true).unwrap().to_vec();
    assert_eq!(rows[0..16], rows[32..48], "same image, same embedding");
    assert_ne!(rows[0..16], rows[16..32]);
}

#[test]
fn embed_input_shape_is_validated() {
    let mut net = EmbedNet::<f32>::build(EmbedSpec::tiny(), &mut seeded_rng(4)).unwrap();
    let wrong = Tensor::rand_uniform(&[2, 1, 4, 4], 0.0, 1.0, &mut seeded_rng(5));
    assert!(net.forward(&wrong, false).is_err());
}

#[test]
fn embed_gradients_check_out() {
    let net = RefCell::new(EmbedNet::<f64>::build(EmbedSpec::tiny(), &mut seeded_rng(6)).unwrap());
    let x = Tensor::rand_uniform(&[2, 1, 8, 8], 0.1, 0.9, &mut seeded_rng(7));
    let weight = net
        .borrow()
        .named_params()
        .into_iter()
        .find(|(n, _)| n == "layer.0.conv.weight")
        .unwrap()
        .1;
    let report = grad_check(
        |inputs: &[Tensor<f64>]| {
            let emb = net.borrow_mut().forward(&inputs[0], false).expect("embed");
            Ok(ops::sum_all(&emb))
        },
        &[x, weight],
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_err() <= 1e-6, "embed grad check: {:.3e}", report.max_rel_err());
}

// ---------------------------------------------------------------------------
// Attention

#[test]
fn single_support_takes_all_the_attention() {
    let q = Tensor::<f64>::from_vec(&[1, 3], vec![0.2, -0.4, 0.9]);
    let s = Tensor::<f64>::from_vec(&[1, 3], vec![1.0, 2.0, 3.0]);
    let probs = attention_classify(&q, &s, &[0], 2).unwrap().to_vec();
    assert!((probs[0] - 1.0).abs() < 1e-12, "lone support gets mass 1, got {probs:?}");
    assert!(probs[1].abs() < 1e-12);
}

#[test]
fn symmetric_supports_split_the_attention() {
    let q = Tensor::<f64>::from_vec(&[1, 2], vec![1.0, 1.0]);
    let s = Tensor::<f64>::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]);
    let probs = attention_classify(&q, &s, &[0, 1], 2).unwrap().to_vec();
    assert!((probs[0] - 0.5).abs() < 1e-7, "{probs:?}");
    assert!((probs[1] - 0.5).abs() < 1e-7);
}

#[test]
fn attention_matches_the_softmax_oracle() {
    // One support aligned with the query, two orthogonal: cosines are
    // [1, 0, 0], so the aligned class takes e/(e+2).
    let q = Tensor::<f64>::from_vec(&[1, 3], vec![2.0, 0.0, 0.0]);
    let s = Tensor::<f64>::from_vec(
        &[3, 3],
        vec![5.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 7.0],
    );
    let probs = attention_classify(&q, &s, &[0, 1, 2], 3).unwrap().to_vec();
    let e = std::f64::consts::E;
    assert!((probs[0] - e / (e + 2.0)).abs() < 1e-7, "{probs:?}");
    assert!((probs[1] - 1.0 / (e + 2.0)).abs() < 1e-7);
    assert!((probs[2] - 1.0 / (e + 2.0)).abs() < 1e-7);
}

#[test]
fn attention_rows_sum_to_one_and_ignore_support_order() {
    let mut rng = seeded_rng(8);
    let q = Tensor::<f64>::rand_uniform(&[5, 6], -1.0, 1.0, &mut rng);
    let s = Tensor::<f64>::rand_uniform(&[7, 6], -1.0, 1.0, &mut rng);
    let labels = [0usize, 1, 2, 0, 1, 2, 0];
    let probs = attention_classify(&q, &s, &labels, 3).unwrap().to_vec();
    for row in probs.chunks(3) {
        let sum: f64 = row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6, "row sums to {sum}");
    }

    // Reversing the support order permutes attention terms but not the
    // per-class pooled probabilities.
    let flat = s.to_vec();
    let reversed: Vec<f64> = flat.chunks(6).rev().flatten().copied().collect();
    let s_rev = Tensor::from_vec(&[7, 6], reversed);
    let labels_rev: Vec<usize> = labels.iter().rev().copied().collect();
    let probs_rev = attention_classify(&q, &s_rev, &labels_rev, 3).unwrap().to_vec();
    for (a, b) in probs.iter().zip(&probs_rev) {
        assert!((a - b).abs() < 1e-9, "support order leaked: {a} vs {b}");
    }
}

#[test]
fn attention_rejects_degenerate_inputs() {
    let q = Tensor::<f64>::from_vec(&[1, 2], vec![1.0, 0.0]);
    let s = Tensor::<f64>::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 0.0]);
    let err = attention_classify(&q, &s, &[0, 1], 2).unwrap_err().to_string();
    assert!(err.contains("support embedding 1 has zero norm"), "{err}");

    let q0 = Tensor::<f64>::from_vec(&[1, 2], vec![0.0, 0.0]);
    let s_ok = Tensor::<f64>::from_vec(&[1, 2], vec![1.0, 0.0]);
    let err = attention_classify(&q0, &s_ok, &[0], 2).unwrap_err().to_string();
    assert!(err.contains("query embedding 0"), "{err}");

    // Label outside the episode, label count mismatch, dim mismatch.
    assert!(attention_classify(&q, &s_ok, &[2], 2).is_err());
    assert!(attention_classify(&q, &s_ok, &[0, 0], 2).is_err());
    let s3 = Tensor::<f64>::from_vec(&[1, 3], vec![1.0, 0.0, 0.0]);
    assert!(attention_classify(&q, &s3, &[0], 2).is_err());
}

// ---------------------------------------------------------------------------
// Episodes

#[test]
fn episodes_have_the_advertised_shape() {
    let data = toy_world(9);
    let mut rng = seeded_rng(10);
    let ep = make_episode(&data, Domain::Source, 3, 2, 2, &mut rng).unwrap();
    assert_eq!(ep.support_images.len(), 6);
    assert_eq!(ep.support_labels, [0, 0, 1, 1, 2, 2]);
    assert_eq!(ep.query_images.len(), 6);
    assert_eq!(ep.query_labels, [0, 0, 1, 1, 2, 2]);
    assert_eq!(ep.class_map.len(), 3);
    for &class in &ep.class_map {
        assert_eq!(data.classes[class].domain, Domain::Source);
    }

    // Every drawn image matches its class's brightness level, and no
    // image serves as both support and query.
    let check = |img: &Vec<f32>, label: usize| {
        let mean = img.iter().sum::<f32>() / 64.0;
        let base = 0.08 + 0.055 * ep.class_map[label] as f32;
        assert!((mean - base).abs() < 0.02, "mean {mean} vs level {base}");
    };
    for (img, &l) in ep.support_images.iter().zip(&ep.support_labels) {
        check(img, l);
        assert!(!ep.query_images.contains(img), "support image reused as query");
    }
    for (img, &l) in ep.query_images.iter().zip(&ep.query_labels) {
        check(img, l);
    }
}

#[test]
fn episode_rejects_impossible_requests() {
    let data = toy_world(11);
    let mut rng = seeded_rng(12);
    let err = make_episode(&data, Domain::Source, 0, 1, 1, &mut rng).unwrap_err().to_string();
    assert!(err.contains("positive"), "{err}");
    let err = make_episode(&data, Domain::Source, 7, 1, 1, &mut rng).unwrap_err().to_string();
    assert!(err.contains("domain offers 6"), "{err}");
    // Six images per class: shot 4 + queries 3 disqualifies everyone.
    assert!(make_episode(&data, Domain::Source, 2, 4, 3, &mut rng).is_err());
    assert!(make_episode(&data, Domain::Target, 4, 1, 1, &mut rng).is_err());
}

#[test]
fn episodes_are_reproducible() {
    let data = toy_world(13);
    let a = make_episode(&data, Domain::Source, 3, 1, 2, &mut seeded_rng(40)).unwrap();
    let b = make_episode(&data, Domain::Source, 3, 1, 2, &mut seeded_rng(40)).unwrap();
    assert_eq!(format!("{a:?}"), format!("{b:?}"), "same seed, same episode");
    let c = make_episode(&data, Domain::Source, 3, 1, 2, &mut seeded_rng(41)).unwrap();
    assert_ne!(format!("{a:?}"), format!("{c:?}"), "different seed, different draw");
}

// ---------------------------------------------------------------------------
// Support pools and the selector

#[test]
fn support_pool_without_augmentation_is_the_raw_support() {
    let data = toy_world(14);
    let ep = make_episode(&data, Domain::Source, 3, 2, 1, &mut seeded_rng(15)).unwrap();
    let mut model = Matchnet32::build(EmbedSpec::tiny(), None, &mut seeded_rng(16)).unwrap();
    let (support, labels) = model.support_pool(&ep, None, true, &mut seeded_rng(17)).unwrap();
    assert_eq!(support.shape(), [6, 1, 8, 8]);
    assert_eq!(labels, ep.support_labels);
    let flat: Vec<f32> = ep.support_images.iter().flatten().copied().collect();
    assert_eq!(support.to_vec(), flat, "no generator, no new pixels");
}

#[test]
fn support_pool_stacks_generated_variants() {
    let data = toy_world(18);
    let ep = make_episode(&data, Domain::Source, 2, 2, 1, &mut seeded_rng(19)).unwrap();
    let mut model = Matchnet32::build(EmbedSpec::tiny(), None, &mut seeded_rng(20)).unwrap();
    let mut gen = Generator32::build(GeneratorSpec::tiny(), &mut seeded_rng(21)).unwrap();
    let (support, labels) =
        model.support_pool(&ep, Some((&mut gen, 2)), false, &mut seeded_rng(22)).unwrap();
    // 4 real support items + 2 generated rounds of 4.
    assert_eq!(support.shape(), [12, 1, 8, 8]);
    assert_eq!(labels, [0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1]);
    let flat = support.to_vec();
    let real: Vec<f32> = ep.support_images.iter().flatten().copied().collect();
    assert_eq!(flat[..256], real, "real images lead the pool");
    assert!(flat[256..].iter().all(|v| v.is_finite()));
    assert_ne!(flat[256..512], real, "generated variants are new images");
}

#[test]
fn selector_runs_deterministically_in_eval() {
    let spec = SelectorSpec::new(16, 8);
    assert_eq!(spec.hidden, 128);
    let sel = SelectorNet::<f32>::build(spec, &mut seeded_rng(23));
    let emb = Tensor::rand_uniform(&[3, 16], -1.0, 1.0, &mut seeded_rng(24));
    let a = sel.forward(&emb, false, &mut seeded_rng(0)).unwrap();
    let b = sel.forward(&emb, false, &mut seeded_rng(99)).unwrap();
    assert_eq!(a.shape(), [3, 8]);
    assert_eq!(a.to_vec(), b.to_vec(), "eval mode ignores the rng");
    // Training mode perturbs the mean with fresh noise.
    let c = sel.forward(&emb, true, &mut seeded_rng(1)).unwrap();
    let d = sel.forward(&emb, true, &mut seeded_rng(2)).unwrap();
    assert_ne!(c.to_vec(), d.to_vec());
}

// ---------------------------------------------------------------------------
// Training

fn tiny_cfg(episodes: usize, k_augment: usize, use_selector: bool) -> MatchnetConfig {
    MatchnetConfig {
        embed: EmbedSpec::tiny(),
        episodes,
        way: 3,
        shot: 1,
        query_per_class: 1,
        k_augment,
        use_selector,
        lr: 1e-3,
        val_every: 3,
        val_episodes: 2,
        seed: 77,
        ..MatchnetConfig::default()
    }
}

#[test]
fn config_validation_catches_bad_settings() {
    assert!(MatchnetConfig { way: 1, ..tiny_cfg(5, 0, false) }.validate().is_err());
    assert!(MatchnetConfig { k_augment: 3, ..tiny_cfg(5, 0, false) }.validate().is_err());
    assert!(MatchnetConfig { episodes: 0, ..tiny_cfg(5, 0, false) }.validate().is_err());
    assert!(MatchnetConfig { lr: 0.0, ..tiny_cfg(5, 0, false) }.validate().is_err());
    tiny_cfg(5, 2, true).validate().unwrap();
}

#[test]
fn augmented_training_demands_a_generator() {
    let data = toy_world(25);
    let Err(err) = train_matchnet::<f32>(&data, &tiny_cfg(3, 1, false), None) else {
        panic!("k_augment > 0 without a generator must fail")
    };
    assert!(err.to_string().contains("generator"), "{err}");
    assert!(train_matchnet::<f32>(&data, &tiny_cfg(3, 0, true), None).is_err());

    let mismatched = MatchnetConfig { embed: EmbedSpec::default(), ..tiny_cfg(3, 0, false) };
    let Err(err) = train_matchnet::<f32>(&data, &mismatched, None) else {
        panic!("shape mismatch must fail")
    };
    assert!(err.to_string().contains("dataset"), "{err}");
}

#[test]
fn training_moves_the_embedder_and_reports_validation() {
    let data = toy_world(26);
    let cfg = tiny_cfg(6, 0, false);
    let trained = train_matchnet::<f32>(&data, &cfg, None).unwrap();
    assert_eq!(trained.episodes_trained, 6);
    assert!(!trained.aborted_nonfinite);
    let acc = trained.best_val_accuracy.expect("validation domain is usable");
    assert!((0.0..=1.0).contains(&acc));

    // Same seed, same construction order as inside train_matchnet.
    let init = Matchnet32::build(cfg.embed.clone(), None, &mut seeded_rng(cfg.seed)).unwrap();
    let moved = trained
        .model
        .named_params()
        .iter()
        .zip(init.named_params())
        .any(|((_, after), (_, before))| after.to_vec() != before.to_vec());
    assert!(moved, "six episodes should move at least one parameter");
}

#[test]
fn training_leaves_the_generator_frozen() {
    let data = toy_world(27);
    let mut gen = Generator32::build(GeneratorSpec::tiny(), &mut seeded_rng(28)).unwrap();
    let before: Vec<(String, Vec<f32>)> =
        gen.named_params().into_iter().map(|(n, p)| (n, p.to_vec())).collect();
    let trained = train_matchnet(&data, &tiny_cfg(5, 1, false), Some(&mut gen)).unwrap();
    assert_eq!(trained.episodes_trained, 5);
    for ((name, old), (_, live)) in before.iter().zip(gen.named_params()) {
        assert_eq!(old, &live.to_vec(), "generator param {name} moved");
        assert!(live.grad().is_none(), "generator param {name} accumulated a gradient");
        assert!(live.requires_grad(), "freeze must be undone after training");
    }
}

#[test]
fn selector_trains_alongside_the_embedder() {
    let data = toy_world(29);
    let cfg = tiny_cfg(5, 1, true);
    let mut gen = Generator32::build(GeneratorSpec::tiny(), &mut seeded_rng(30)).unwrap();
    let trained = train_matchnet(&data, &cfg, Some(&mut gen)).unwrap();
    let sel = trained.model.selector.as_ref().expect("selector was requested");

    let init = Matchnet32::build(
        cfg.embed.clone(),
        Some(gen.spec().z_dim),
        &mut seeded_rng(cfg.seed),
    )
    .unwrap();
    let moved = sel
        .named_params()
        .iter()
        .zip(init.selector.as_ref().unwrap().named_params())
        .any(|((_, after), (_, before))| after.to_vec() != before.to_vec());
    assert!(moved, "selector gradients flow through generated pixels");
}

#[test]
fn nonfinite_losses_stop_training_but_keep_a_model() {
    let data = toy_world(31);
    // An absurd learning rate explodes the parameters after the first
    // step; the second episode's loss is no longer finite.
    let cfg = MatchnetConfig { lr: 1e30, val_every: 1, ..tiny_cfg(10, 0, false) };
    let trained = train_matchnet::<f32>(&data, &cfg, None).unwrap();
    assert!(trained.aborted_nonfinite);
    assert!(trained.episodes_trained >= 1);
    assert!(trained.episodes_trained < 10, "the abort must cut the run short");

    // Poisoned pixels make even the first episode non-finite: that run
    // never produced a model worth returning.
    let mut bad = toy_world(32);
    for k in bad.classes_in(Domain::Source) {
        for img in &mut bad.classes[k].images {
            img.fill(f32::NAN);
        }
    }
    let Err(err) = train_matchnet::<f32>(&bad, &tiny_cfg(5, 0, false), None) else {
        panic!("an all-NaN first episode must fail")
    };
    assert!(err.to_string().contains("non-finite"), "{err}");
}

// ---------------------------------------------------------------------------
// Baselines and evaluation

#[test]
fn pixel_distance_breaks_ties_toward_the_smaller_label() {
    let support = vec![vec![0.9f32; 4], vec![0.1; 4], vec![0.5; 4]];
    let labels = [2, 1, 0];
    assert_eq!(pixel_distance_classify(&[0.1; 4], &support, &labels).unwrap(), 1);
    assert_eq!(pixel_distance_classify(&[0.88; 4], &support, &labels).unwrap(), 2);

    // Two identical supports with different labels: the smaller wins.
    let tied = vec![vec![0.3f32; 4], vec![0.3; 4]];
    assert_eq!(pixel_distance_classify(&[0.0; 4], &tied, &[1, 0]).unwrap(), 0);

    // A duplicate support with a duplicate label changes nothing.
    let mut padded = support.clone();
    padded.push(support[1].clone());
    assert_eq!(pixel_distance_classify(&[0.1; 4], &padded, &[2, 1, 0, 1]).unwrap(), 1);

    assert!(pixel_distance_classify(&[0.1; 3], &support, &labels).is_err());
    assert!(pixel_distance_classify(&[0.1; 4], &[], &[]).is_err());
}

#[test]
fn oneshot_oracle_and_chance_behave() {
    // Brightness levels 0.055 apart vs ±0.01 noise: pixel distance is
    // an oracle on the target domain.
    let data = toy_world(33);
    let report = evaluate_oneshot::<f32>(None, &data, Domain::Target, 3, 1, 2, 30, None, 50)
        .unwrap();
    assert_eq!(report.technique, "pixel_distance");
    assert_eq!(report.episodes, 30);
    assert!(report.test_accuracy >= 0.99, "oracle accuracy {}", report.test_accuracy);
    assert!(report.stderr >= 0.0);

    // Pure-noise classes sit at chance, to within a few standard errors.
    let noise = noise_world(34);
    let chance = evaluate_oneshot::<f32>(None, &noise, Domain::Target, 4, 1, 2, 50, None, 51)
        .unwrap();
    assert!(
        (chance.test_accuracy - 0.25).abs() <= 0.1,
        "chance-level accuracy {} strayed from 0.25",
        chance.test_accuracy
    );

    // Same seed, same report; the episode budget must be respected.
    let again = evaluate_oneshot::<f32>(None, &data, Domain::Target, 3, 1, 2, 30, None, 50)
        .unwrap();
    assert_eq!(report.test_accuracy.to_bits(), again.test_accuracy.to_bits());
    assert!(evaluate_oneshot::<f32>(None, &data, Domain::Target, 3, 1, 2, 0, None, 0).is_err());
}

#[test]
fn evaluation_reports_the_right_technique_names() {
    let data = toy_world(35);
    let mut model = Matchnet32::build(EmbedSpec::tiny(), None, &mut seeded_rng(36)).unwrap();
    let mut gen = Generator32::build(GeneratorSpec::tiny(), &mut seeded_rng(37)).unwrap();
    let name = |m: Option<&mut Matchnet<f32>>, g: Option<(&mut Generator32, usize)>| {
        evaluate_oneshot(m, &data, Domain::Target, 2, 1, 1, 2, g, 52).unwrap().technique
    };
    assert_eq!(name(None, None), "pixel_distance");
    assert_eq!(name(None, Some((&mut gen, 1))), "pixel_distance_dagan");
    assert_eq!(name(Some(&mut model), None), "matchnet");
    assert_eq!(name(Some(&mut model), Some((&mut gen, 1))), "matchnet_dagan");
}

#[test]
fn oneshot_csv_has_the_expected_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("oneshot.csv");
    let reports = vec![
        OneShotReport {
            technique: "pixel_distance".into(),
            test_accuracy: 0.265,
            stderr: 0.01,
            episodes: 100,
        },
        OneShotReport {
            technique: "matchnet_dagan".into(),
            test_accuracy: 0.7,
            stderr: 0.02,
            episodes: 100,
        },
    ];
    write_oneshot_csv(&path, &reports).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "technique,test_accuracy,stderr,episodes");
    assert_eq!(lines.next().unwrap(), "pixel_distance,0.265,0.01,100");
    assert_eq!(lines.next().unwrap(), "matchnet_dagan,0.7,0.02,100");
}
