//! Generator wiring: shapes, determinism, latent sensitivity, skip
//! connectivity, and end-to-end gradient checks on a miniature spec.

use std::cell::RefCell;

use proptest::prelude::*;

use dagan::data::ImageShape;
use dagan::generator::{sample_z, Generator, Generator64, GeneratorSpec};
use dagan_nn::ops;
use dagan_nn::rng::seeded_rng;
use dagan_nn::{backward, grad_check, Tensor};

fn build_tiny(seed: u64) -> Generator<f32> {
    Generator::build(GeneratorSpec::tiny(), &mut seeded_rng(seed)).unwrap()
}

#[test]
fn output_matches_input_shape_and_range() {
    let mut rng = seeded_rng(0);
    let mut gen = build_tiny(1);
    let x = Tensor::<f32>::rand_uniform(&[3, 1, 8, 8], 0.0, 1.0, &mut rng);
    let z = sample_z(3, 8, &mut rng);
    let out = gen.generate(&x, &z, false, &mut rng).unwrap();
    assert_eq!(out.shape(), x.shape());
    assert!(out.to_vec().iter().all(|v| (0.0..=1.0).contains(v)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]
    #[test]
    fn output_shape_round_trips(blocks in 1usize..3, layers in 2usize..4, n in 2usize..4) {
        let side = 4 << blocks; // keeps the bottleneck at 4×4
        let spec = GeneratorSpec {
            num_blocks_per_side: blocks,
            layers_per_block: layers,
            k_list: vec![3; blocks],
            skip_distance: layers,
            z_dim: 6,
            image_shape: ImageShape::new(1, side, side),
            dropout_rate: 0.1,
        };
        let mut rng = seeded_rng(7);
        let mut gen = Generator::<f32>::build(spec, &mut rng).unwrap();
        let x = Tensor::rand_uniform(&[n, 1, side, side], 0.0, 1.0, &mut rng);
        let z = sample_z(n, 6, &mut rng);
        let out = gen.generate(&x, &z, true, &mut rng).unwrap();
        prop_assert_eq!(out.shape(), x.shape());
    }
}

#[test]
fn training_forward_needs_a_real_batch() {
    let mut gen = build_tiny(21);
    let mut rng = seeded_rng(22);
    let x = Tensor::<f32>::rand_uniform(&[1, 1, 8, 8], 0.0, 1.0, &mut rng);
    let z = sample_z(1, 8, &mut rng);
    // Batch statistics need at least two samples in training mode…
    assert!(gen.generate(&x, &z, true, &mut rng).is_err());
    // …but eval mode runs on moving statistics and accepts singletons.
    assert!(gen.generate(&x, &z, false, &mut rng).is_ok());
}

#[test]
fn bottleneck_shape_arithmetic() {
    // Default: 32×32 through 4 halvings with 64 filters.
    assert_eq!(GeneratorSpec::default().bottleneck_shape(), (64, 2, 2));
    // Tiny: 8×8 through 2 halvings with 4 filters.
    assert_eq!(GeneratorSpec::tiny().bottleneck_shape(), (4, 2, 2));
}

#[test]
fn spec_validation_catches_bad_configs() {
    let mut bad = GeneratorSpec::tiny();
    bad.k_list = vec![4]; // must have one entry per block
    assert!(bad.validate().is_err());

    let mut bad = GeneratorSpec::tiny();
    bad.image_shape = ImageShape::new(1, 6, 6); // 6 does not survive 2 halvings
    assert!(bad.validate().is_err());

    let mut bad = GeneratorSpec::tiny();
    bad.z_dim = 0;
    assert!(bad.validate().is_err());

    let mut bad = GeneratorSpec::tiny();
    bad.skip_distance = 0;
    assert!(bad.validate().is_err());
}

#[test]
fn same_seed_same_build_same_output() {
    let mut a = build_tiny(5);
    let mut b = build_tiny(5);
    let pa = a.named_params();
    let pb = b.named_params();
    assert_eq!(pa.len(), pb.len());
    for ((na, ta), (nb, tb)) in pa.iter().zip(&pb) {
        assert_eq!(na, nb);
        assert_eq!(ta.to_vec(), tb.to_vec());
    }
    let mut rng = seeded_rng(9);
    let x = Tensor::<f32>::rand_uniform(&[2, 1, 8, 8], 0.0, 1.0, &mut rng);
    let z = sample_z(2, 8, &mut rng);
    let out_a = a.generate(&x, &z, false, &mut seeded_rng(1)).unwrap();
    let out_b = b.generate(&x, &z, false, &mut seeded_rng(1)).unwrap();
    assert_eq!(out_a.to_vec(), out_b.to_vec());
}

#[test]
fn parameter_names_are_unique_and_stable() {
    let gen = build_tiny(2);
    let names: Vec<String> = gen.named_params().into_iter().map(|(n, _)| n).collect();
    let mut dedup = names.clone();
    dedup.sort();
    dedup.dedup();
    assert_eq!(dedup.len(), names.len(), "duplicate parameter names");
    assert_eq!(
        names,
        build_tiny(3).named_params().into_iter().map(|(n, _)| n).collect::<Vec<_>>()
    );
}

#[test]
fn latent_moves_the_output() {
    let mut gen = build_tiny(4);
    let mut rng = seeded_rng(11);
    let x = Tensor::<f32>::rand_uniform(&[2, 1, 8, 8], 0.0, 1.0, &mut rng);
    let z1 = sample_z(2, 8, &mut rng);
    let z2 = sample_z(2, 8, &mut rng);
    let a = gen.generate(&x, &z1, false, &mut rng).unwrap();
    let b = gen.generate(&x, &z2, false, &mut rng).unwrap();
    let max_diff = a
        .to_vec()
        .iter()
        .zip(b.to_vec())
        .map(|(x, y)| (x - y).abs())
        .fold(0f32, f32::max);
    assert!(max_diff > 1e-6, "two latents produced identical images");
}

#[test]
fn conditioning_image_moves_the_output() {
    let mut gen = build_tiny(4);
    let mut rng = seeded_rng(12);
    let x1 = Tensor::<f32>::rand_uniform(&[1, 1, 8, 8], 0.0, 1.0, &mut rng);
    let x2 = Tensor::<f32>::rand_uniform(&[1, 1, 8, 8], 0.0, 1.0, &mut rng);
    let z = sample_z(1, 8, &mut rng);
    let a = gen.generate(&x1, &z, false, &mut rng).unwrap();
    let b = gen.generate(&x2, &z, false, &mut rng).unwrap();
    assert_ne!(a.to_vec(), b.to_vec());
}

#[test]
fn eval_samples_are_batch_independent() {
    let mut gen = build_tiny(6);
    let mut rng = seeded_rng(13);
    let x = Tensor::<f32>::rand_uniform(&[2, 1, 8, 8], 0.0, 1.0, &mut rng);
    x.set_requires_grad(true);
    let z = sample_z(2, 8, &mut rng);
    let out = gen.generate(&x, &z, false, &mut rng).unwrap();
    // A loss over sample 0 must not touch sample 1's pixels.
    let loss = ops::sum_all(&ops::narrow(&out, 0, 0, 1));
    backward(&loss).unwrap();
    let grad = x.grad().expect("input gradient").to_vec();
    let (first, second) = grad.split_at(64);
    assert!(first.iter().any(|v| *v != 0.0), "sample 0 should get gradient");
    assert!(second.iter().all(|v| *v == 0.0), "sample 1 leaked into sample 0's loss");
}

#[test]
fn long_skips_carry_signal() {
    let mut gen = build_tiny(7);
    let mut rng = seeded_rng(14);
    let x = Tensor::<f32>::rand_uniform(&[1, 1, 8, 8], 0.0, 1.0, &mut rng);
    let z = sample_z(1, 8, &mut rng);
    let with = gen.generate(&x, &z, false, &mut rng).unwrap();
    let without = gen
        .generate_with_skip_scale(&x, &z, false, &mut rng, &[0.0, 0.0])
        .unwrap();
    let max_diff = with
        .to_vec()
        .iter()
        .zip(without.to_vec())
        .map(|(a, b)| (a - b).abs())
        .fold(0f32, f32::max);
    assert!(max_diff > 1e-6, "zeroing the UNet skips changed nothing");
}

#[test]
fn train_mode_updates_renorm_buffers_eval_does_not() {
    let mut gen = build_tiny(8);
    let mut rng = seeded_rng(15);
    let x = Tensor::<f32>::rand_uniform(&[4, 1, 8, 8], 0.0, 1.0, &mut rng);
    let z = sample_z(4, 8, &mut rng);
    let snapshot = |g: &Generator<f32>| -> Vec<Vec<f32>> {
        g.named_buffers().into_iter().map(|(_, b)| b.to_vec()).collect()
    };
    let before = snapshot(&gen);
    gen.generate(&x, &z, false, &mut rng).unwrap();
    assert_eq!(snapshot(&gen), before, "eval forward touched moving statistics");
    gen.generate(&x, &z, true, &mut rng).unwrap();
    assert_ne!(snapshot(&gen), before, "train forward left moving statistics untouched");
}

#[test]
fn dropout_only_acts_in_training_mode() {
    let mut gen = build_tiny(9);
    let mut rng = seeded_rng(16);
    let x = Tensor::<f32>::rand_uniform(&[2, 1, 8, 8], 0.0, 1.0, &mut rng);
    let z = sample_z(2, 8, &mut rng);
    // Eval: identical regardless of rng state.
    let a = gen.generate(&x, &z, false, &mut seeded_rng(1)).unwrap();
    let b = gen.generate(&x, &z, false, &mut seeded_rng(2)).unwrap();
    assert_eq!(a.to_vec(), b.to_vec());
    // Training: different dropout draws give different outputs.
    let c = gen.generate(&x, &z, true, &mut seeded_rng(1)).unwrap();
    let d = gen.generate(&x, &z, true, &mut seeded_rng(2)).unwrap();
    assert_ne!(c.to_vec(), d.to_vec());
}

#[test]
fn sample_z_is_standard_normal_ish() {
    let mut rng = seeded_rng(17);
    let z = sample_z::<f32>(500, 16, &mut rng);
    assert_eq!(z.shape(), [500, 16]);
    let v = z.to_vec();
    let mean = v.iter().sum::<f32>() / v.len() as f32;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f32>() / v.len() as f32;
    assert!(mean.abs() < 0.05, "latent mean {mean}");
    assert!((var - 1.0).abs() < 0.1, "latent variance {var}");
}

#[test]
fn encoder_bottleneck_has_the_declared_shape() {
    let mut gen = build_tiny(18);
    let mut rng = seeded_rng(19);
    let x = Tensor::<f32>::rand_uniform(&[3, 1, 8, 8], 0.0, 1.0, &mut rng);
    let r = gen.encode_bottleneck(&x).unwrap();
    let (c, h, w) = gen.spec().bottleneck_shape();
    assert_eq!(r.shape(), [3, c, h, w]);
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    let mut rng = seeded_rng(20);
    let spec = GeneratorSpec {
        dropout_rate: 0.0, // determinism for the probes
        ..GeneratorSpec::tiny()
    };
    let gen = RefCell::new(Generator64::build(spec, &mut rng).unwrap());
    let x = Tensor::<f64>::rand_uniform(&[1, 1, 8, 8], 0.05, 0.95, &mut rng);
    let z = Tensor::<f64>::randn(&[1, 8], &mut rng);
    let probe = Tensor::<f64>::randn(&[1, 1, 8, 8], &mut rng);
    let weight = gen
        .borrow()
        .named_params()
        .into_iter()
        .find(|(n, _)| n.contains("conv") && n.contains("weight"))
        .expect("a conv weight")
        .1;
    let report = grad_check(
        |inputs: &[Tensor<f64>]| {
            let out = gen
                .borrow_mut()
                .generate(&inputs[0], &inputs[1], false, &mut seeded_rng(0))
                .expect("generate");
            Ok(ops::sum_all(&ops::mul(&out, &probe)))
        },
        &[x, z, weight],
        1e-5,
    )
    .unwrap();
    assert!(
        report.max_rel_err() <= 1e-6,
        "generator grad check failed: {:.3e}",
        report.max_rel_err()
    );
}
