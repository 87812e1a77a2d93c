use dagan_nn::ops::{self, Padding};
use dagan_nn::{backward, Tensor64};

#[test]
fn conv_ones_kernel_counts_window_overlap() {
    // 4x4 ones, 3x3 ones kernel, stride 1, same padding: each output counts
    // how many input cells its window covers — 9 inside, 4 at corners.
    let x = Tensor64::ones(&[1, 1, 4, 4]);
    let k = Tensor64::ones(&[1, 1, 3, 3]);
    let y = ops::conv2d(&x, &k, None, 1, Padding::Same).unwrap();
    assert_eq!(y.shape(), &[1, 1, 4, 4]);
    let d = y.to_vec();
    assert_eq!(d[0], 4.0); // corner
    assert_eq!(d[3], 4.0);
    assert_eq!(d[5], 9.0); // interior
    assert_eq!(d[10], 9.0);
    assert_eq!(d[1], 6.0); // edge
}

#[test]
fn conv_identity_kernel_is_identity() {
    let mut rng = dagan_nn::rng::seeded_rng(1);
    let x = Tensor64::randn(&[2, 3, 5, 4], &mut rng);
    let k = Tensor64::zeros(&[3, 3, 1, 1]);
    for c in 0..3 {
        k.data_mut()[[c, c, 0, 0]] = 1.0;
    }
    let y = ops::conv2d(&x, &k, None, 1, Padding::Same).unwrap();
    let (xd, yd) = (x.to_vec(), y.to_vec());
    for (a, b) in xd.iter().zip(&yd) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn conv_stride_two_same_padding_halves_dims() {
    let x = Tensor64::zeros(&[1, 1, 32, 32]);
    let k = Tensor64::zeros(&[4, 1, 3, 3]);
    let y = ops::conv2d(&x, &k, None, 2, Padding::Same).unwrap();
    assert_eq!(y.shape(), &[1, 4, 16, 16]);
    // Odd input: ceil(7/2) = 4.
    let x = Tensor64::zeros(&[1, 1, 7, 7]);
    let k = Tensor64::zeros(&[1, 1, 3, 3]);
    let y = ops::conv2d(&x, &k, None, 2, Padding::Same).unwrap();
    assert_eq!(y.shape(), &[1, 1, 4, 4]);
}

#[test]
fn conv_valid_padding_shrinks() {
    let x = Tensor64::ones(&[1, 1, 5, 5]);
    let k = Tensor64::ones(&[1, 1, 3, 3]);
    let y = ops::conv2d(&x, &k, None, 1, Padding::Valid).unwrap();
    assert_eq!(y.shape(), &[1, 1, 3, 3]);
    assert!(y.to_vec().iter().all(|v| *v == 9.0));
}

#[test]
fn conv_channel_mismatch_is_a_structured_error() {
    let x = Tensor64::zeros(&[1, 3, 4, 4]);
    let k = Tensor64::zeros(&[1, 2, 3, 3]);
    let err = ops::conv2d(&x, &k, None, 1, Padding::Same).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("in_channels"), "got: {msg}");
    assert!(msg.contains("expected 3"), "got: {msg}");
}

#[test]
fn conv_bias_adds_per_channel() {
    let x = Tensor64::zeros(&[1, 1, 2, 2]);
    let k = Tensor64::zeros(&[2, 1, 1, 1]);
    let b = Tensor64::from_vec(&[2], vec![0.5, -1.5]);
    let y = ops::conv2d(&x, &k, Some(&b), 1, Padding::Same).unwrap();
    let d = y.to_vec();
    assert!(d[..4].iter().all(|v| *v == 0.5));
    assert!(d[4..].iter().all(|v| *v == -1.5));
}

#[test]
fn leaky_relu_values() {
    let x = Tensor64::from_vec(&[3], vec![-1.0, 0.0, 2.5]);
    let y = ops::leaky_relu(&x, 0.01);
    let d = y.to_vec();
    assert!((d[0] + 0.01).abs() < 1e-15);
    assert_eq!(d[1], 0.0);
    assert_eq!(d[2], 2.5);
}

#[test]
fn leaky_relu_gradient_slopes() {
    let x = Tensor64::from_vec(&[2], vec![-2.0, 3.0]).with_requires_grad(true);
    let y = ops::sum_all(&ops::leaky_relu(&x, 0.01));
    backward(&y).unwrap();
    let g = x.grad().unwrap().to_vec();
    assert!((g[0] - 0.01).abs() < 1e-15);
    assert!((g[1] - 1.0).abs() < 1e-15);
}

#[test]
fn dropout_modes() {
    let mut rng = dagan_nn::rng::seeded_rng(3);
    let x = Tensor64::ones(&[100]);
    // rate = 0 and eval mode are identities.
    assert_eq!(ops::dropout(&x, 0.0, true, &mut rng).to_vec(), x.to_vec());
    assert_eq!(ops::dropout(&x, 0.3, false, &mut rng).to_vec(), x.to_vec());
    // Training: zeros or scaled survivors, deterministic under a fixed seed.
    let mut r1 = dagan_nn::rng::seeded_rng(9);
    let mut r2 = dagan_nn::rng::seeded_rng(9);
    let a = ops::dropout(&x, 0.5, true, &mut r1).to_vec();
    let b = ops::dropout(&x, 0.5, true, &mut r2).to_vec();
    assert_eq!(a, b);
    assert!(a.iter().all(|v| *v == 0.0 || (*v - 2.0).abs() < 1e-12));
    assert!(a.iter().any(|v| *v == 0.0));
    assert!(a.iter().any(|v| *v != 0.0));
}

#[test]
fn dropout_expectation_close_to_identity() {
    // Inverted dropout is unbiased: averaging many masks recovers the input.
    let x = 1.7f64;
    let xt = Tensor64::full(&[1], x);
    let mut rng = dagan_nn::rng::seeded_rng(1234);
    let trials = 10_000;
    let sum: f64 = (0..trials)
        .map(|_| ops::dropout(&xt, 0.3, true, &mut rng).item())
        .sum();
    let mean = sum / trials as f64;
    assert!(
        (mean - x).abs() / x < 0.02,
        "dropout mean {mean} vs input {x}"
    );
}

#[test]
fn pooling_shapes_and_values() {
    let x = Tensor64::from_vec(
        &[1, 1, 2, 4],
        vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
    );
    let s = ops::sum_pool2(&x).unwrap();
    assert_eq!(s.shape(), &[1, 1, 1, 2]);
    assert_eq!(s.to_vec(), vec![14.0, 22.0]);
    let a = ops::avg_pool2(&x).unwrap();
    assert_eq!(a.to_vec(), vec![3.5, 5.5]);
    let m = ops::max_pool2(&x).unwrap();
    assert_eq!(m.to_vec(), vec![6.0, 8.0]);
    let g = ops::global_avg_pool(&x).unwrap();
    assert_eq!(g.shape(), &[1, 1]);
    assert_eq!(g.to_vec(), vec![4.5]);
    let err = ops::sum_pool2(&Tensor64::zeros(&[1, 1, 3, 4])).unwrap_err();
    assert!(err.to_string().contains("even"));
}

#[test]
fn upsample_nearest_repeats_pixels() {
    let x = Tensor64::from_vec(&[1, 1, 1, 2], vec![1.0, 2.0]);
    let y = ops::upsample_nearest2(&x).unwrap();
    assert_eq!(y.shape(), &[1, 1, 2, 4]);
    assert_eq!(y.to_vec(), vec![1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
}

#[test]
fn max_pool_routes_gradient_to_argmax() {
    let x = Tensor64::from_vec(&[1, 1, 2, 2], vec![1.0, 5.0, 2.0, 3.0]).with_requires_grad(true);
    let y = ops::sum_all(&ops::max_pool2(&x).unwrap());
    backward(&y).unwrap();
    assert_eq!(x.grad().unwrap().to_vec(), vec![0.0, 1.0, 0.0, 0.0]);
}

#[test]
fn softmax_rows_sum_to_one() {
    let x = Tensor64::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0]);
    let s = ops::softmax(&x, 1);
    let d = s.to_vec();
    for row in d.chunks(3) {
        let sum: f64 = row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(row.iter().all(|v| *v > 0.0));
    }
    // Shift invariance.
    let shifted = ops::softmax(&ops::add_scalar(&x, 100.0), 1);
    for (a, b) in s.to_vec().iter().zip(shifted.to_vec()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn cross_entropy_matches_hand_computation() {
    let logits = Tensor64::from_vec(&[1, 2], vec![0.0, 0.0]);
    let loss = ops::cross_entropy(&logits, &[0]).unwrap();
    assert!((loss.item() - (2.0f64).ln()).abs() < 1e-12);
    // Label out of range is rejected.
    assert!(ops::cross_entropy(&logits, &[2]).is_err());
    assert!(ops::cross_entropy(&logits, &[0, 1]).is_err());
}

#[test]
fn concat_and_narrow_round_trip() {
    let a = Tensor64::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
    let b = Tensor64::from_vec(&[2, 1], vec![5.0, 6.0]);
    let c = ops::concat(&[a.clone(), b.clone()], 1);
    assert_eq!(c.shape(), &[2, 3]);
    assert_eq!(c.to_vec(), vec![1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
    let back = ops::narrow(&c, 1, 2, 1);
    assert_eq!(back.to_vec(), b.to_vec());
}

#[test]
fn narrow_gradient_embeds_into_zeros() {
    let x = Tensor64::from_vec(&[4], vec![1.0, 2.0, 3.0, 4.0]).with_requires_grad(true);
    let y = ops::sum_all(&ops::narrow(&x, 0, 1, 2));
    backward(&y).unwrap();
    assert_eq!(x.grad().unwrap().to_vec(), vec![0.0, 1.0, 1.0, 0.0]);
}

#[test]
fn broadcast_and_reduce_are_adjoint() {
    let x = Tensor64::from_vec(&[1, 3], vec![1.0, 2.0, 3.0]).with_requires_grad(true);
    let y = ops::sum_all(&ops::broadcast_to(&x, &[4, 2, 3]));
    backward(&y).unwrap();
    assert_eq!(x.grad().unwrap().to_vec(), vec![8.0, 8.0, 8.0]);
}

#[test]
fn matmul_matches_hand_computed_product() {
    let a = Tensor64::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let b = Tensor64::from_vec(&[3, 2], vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
    let c = ops::matmul(&a, &b);
    assert_eq!(c.to_vec(), vec![58.0, 64.0, 139.0, 154.0]);
}

#[test]
fn mean_axes_keepdims_shapes() {
    let x = Tensor64::ones(&[2, 3, 4]);
    assert_eq!(ops::mean_axes(&x, &[1], true).shape(), &[2, 1, 4]);
    assert_eq!(ops::mean_axes(&x, &[0, 2], false).shape(), &[3]);
    assert_eq!(ops::mean_all(&x).item(), 1.0);
}
