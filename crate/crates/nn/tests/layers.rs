use dagan_nn::ops;
use dagan_nn::rng::seeded_rng;
use dagan_nn::{backward, Adam, BatchRenorm, LayerNorm, Tensor64};

#[test]
fn layer_norm_standardizes_per_sample() {
    let ln = LayerNorm::<f64>::new(&[2]).unwrap();
    let x = Tensor64::from_vec(&[1, 2], vec![1.0, 3.0]);
    let y = ln.forward(&x).unwrap();
    let d = y.to_vec();
    assert!((d[0] + 1.0).abs() < 1e-6);
    assert!((d[1] - 1.0).abs() < 1e-6);
}

#[test]
fn layer_norm_is_per_sample_independent() {
    let ln = LayerNorm::<f64>::new(&[3]).unwrap();
    let mut rng = seeded_rng(5);
    let x = Tensor64::randn(&[4, 3], &mut rng);
    let y = ln.forward(&x).unwrap().to_vec();
    // Swap two samples; outputs swap identically.
    let mut swapped = x.to_vec();
    for j in 0..3 {
        swapped.swap(j, 3 + j);
    }
    let ys = ln.forward(&Tensor64::from_vec(&[4, 3], swapped)).unwrap().to_vec();
    for j in 0..3 {
        assert_eq!(y[j], ys[3 + j]);
        assert_eq!(y[3 + j], ys[j]);
    }
}

#[test]
fn layer_norm_gamma_zero_yields_beta() {
    let mut ln = LayerNorm::<f64>::new(&[3]).unwrap();
    ln.gamma = Tensor64::zeros(&[3]);
    ln.beta = Tensor64::from_vec(&[3], vec![0.5, -0.5, 2.0]);
    let mut rng = seeded_rng(6);
    let y = ln.forward(&Tensor64::randn(&[2, 3], &mut rng)).unwrap();
    assert_eq!(y.to_vec(), vec![0.5, -0.5, 2.0, 0.5, -0.5, 2.0]);
}

#[test]
fn layer_norm_constant_slice_does_not_fail() {
    let ln = LayerNorm::<f64>::new(&[4]).unwrap();
    let y = ln.forward(&Tensor64::full(&[2, 4], 3.0)).unwrap();
    assert!(y.all_finite());
    assert!(y.to_vec().iter().all(|v| v.abs() < 1e-3));
}

#[test]
fn layer_norm_rejects_singleton_features() {
    assert!(LayerNorm::<f64>::new(&[1]).is_err());
}

/// Plain batch norm written independently with scalar loops, as the oracle
/// for the renorm-reduces-to-batch-norm equivalence.
fn plain_batch_norm(
    x: &[f64],
    (n, c, h, w): (usize, usize, usize, usize),
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    let plane = h * w;
    let count = (n * plane) as f64;
    for ch in 0..c {
        let mut mean = 0.0;
        for b in 0..n {
            for p in 0..plane {
                mean += x[(b * c + ch) * plane + p];
            }
        }
        mean /= count;
        let mut var = 0.0;
        for b in 0..n {
            for p in 0..plane {
                let d = x[(b * c + ch) * plane + p] - mean;
                var += d * d;
            }
        }
        var /= count;
        let denom = (var + eps).sqrt();
        for b in 0..n {
            for p in 0..plane {
                let i = (b * c + ch) * plane + p;
                out[i] = gamma[ch] * (x[i] - mean) / denom + beta[ch];
            }
        }
    }
    out
}

#[test]
fn renorm_with_unit_limits_is_plain_batch_norm() {
    let mut rng = seeded_rng(7);
    let (n, c, h, w) = (5, 3, 2, 4);
    let x = Tensor64::randn(&[n, c, h, w], &mut rng);
    let mut bn = BatchRenorm::<f64>::new(c, 0.01);
    bn.set_limits(1.0, 0.0);
    // Push moving stats away from (0,1) to prove r/d clipping hides them.
    bn.moving_mean.data_mut().iter_mut().for_each(|v| *v = 2.5);
    bn.moving_var.data_mut().iter_mut().for_each(|v| *v = 7.0);
    let gamma = vec![1.3, 0.7, -0.2];
    let beta = vec![0.1, 0.0, -1.0];
    bn.gamma = Tensor64::from_vec(&[c], gamma.clone()).with_requires_grad(true);
    bn.beta = Tensor64::from_vec(&[c], beta.clone()).with_requires_grad(true);
    let y = bn.forward(&x, true).unwrap().to_vec();
    let oracle = plain_batch_norm(&x.to_vec(), (n, c, h, w), &gamma, &beta, dagan_nn::EPSILON);
    for (a, b) in y.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-6, "renorm {a} vs plain bn {b}");
    }
}

#[test]
fn renorm_eval_at_moving_mean_is_zero() {
    let mut bn = BatchRenorm::<f64>::new(2, 0.01);
    bn.moving_mean = Tensor64::from_vec(&[2], vec![0.4, -1.2]);
    let x = {
        let t = Tensor64::zeros(&[3, 2, 2, 2]);
        {
            let mut d = t.data_mut();
            for b in 0..3 {
                for ch in 0..2 {
                    for p in 0..4 {
                        d[[b, ch, p / 2, p % 2]] = if ch == 0 { 0.4 } else { -1.2 };
                    }
                }
            }
        }
        t
    };
    let y = bn.forward(&x, false).unwrap();
    assert!(y.to_vec().iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn renorm_standardized_batch_passes_through() {
    // Batch statistics exactly (0,1) with moving stats (0,1): r=1, d=0, and
    // the output is the standardized (i.e. original) input.
    let mut bn = BatchRenorm::<f64>::new(1, 0.01);
    bn.set_limits(3.0, 5.0);
    let x = Tensor64::from_vec(&[2, 1, 1, 1], vec![-1.0, 1.0]);
    let y = bn.forward(&x, true).unwrap().to_vec();
    assert!((y[0] + 1.0).abs() < 1e-6);
    assert!((y[1] - 1.0).abs() < 1e-6);
}

#[test]
fn renorm_rejects_degenerate_batch() {
    let mut bn = BatchRenorm::<f64>::new(1, 0.01);
    let err = bn.forward(&Tensor64::zeros(&[1, 1, 2, 2]), true).unwrap_err();
    assert!(err.to_string().contains("at least 2"));
}

#[test]
fn renorm_moving_stats_track_batches() {
    let mut bn = BatchRenorm::<f64>::new(1, 0.5);
    let x = Tensor64::from_vec(&[2, 1, 1, 1], vec![4.0, 8.0]); // mean 6, var 4
    bn.forward(&x, true).unwrap();
    assert!((bn.moving_mean.to_vec()[0] - 3.0).abs() < 1e-12); // 0 + 0.5*(6-0)
    assert!((bn.moving_var.to_vec()[0] - 2.5).abs() < 1e-12); // 1 + 0.5*(4-1)
}

#[test]
fn adam_zero_gradient_keeps_params() {
    let p = Tensor64::from_vec(&[2], vec![1.0, -2.0]).with_requires_grad(true);
    let zero = ops::mul_scalar(&ops::sum_all(&p), 0.0);
    backward(&zero).unwrap();
    let mut adam = Adam::new(vec![("p".into(), p.clone())], 0.1, 0.9, 0.999);
    adam.step().unwrap();
    assert_eq!(p.to_vec(), vec![1.0, -2.0]);
    assert_eq!(adam.step_count(), 1);
}

#[test]
fn adam_first_step_is_lr_times_sign() {
    for g in [0.5, -3.0] {
        let p = Tensor64::scalar(1.0).with_requires_grad(true);
        let loss = ops::mul_scalar(&p, g);
        backward(&loss).unwrap();
        let mut adam = Adam::new(vec![("p".into(), p.clone())], 1e-2, 0.9, 0.999);
        adam.step().unwrap();
        let delta = p.item() - 1.0;
        assert!(
            (delta + 1e-2 * g.signum()).abs() < 1e-9,
            "step {delta} for gradient {g}"
        );
    }
}

#[test]
fn adam_identical_params_get_identical_updates() {
    let a = Tensor64::scalar(0.3).with_requires_grad(true);
    let b = Tensor64::scalar(0.3).with_requires_grad(true);
    let loss = ops::add(&ops::square(&a), &ops::square(&b));
    backward(&loss).unwrap();
    let mut adam = Adam::new(
        vec![("a".into(), a.clone()), ("b".into(), b.clone())],
        1e-3,
        0.0,
        0.9,
    );
    adam.step().unwrap();
    assert_eq!(a.item().to_bits(), b.item().to_bits());
}

#[test]
fn adam_is_bitwise_deterministic() {
    let run = || {
        let p = Tensor64::from_vec(&[3], vec![0.1, 0.2, 0.3]).with_requires_grad(true);
        let mut adam = Adam::new(vec![("p".into(), p.clone())], 1e-4, 0.0, 0.9);
        for _ in 0..5 {
            adam.zero_grads();
            let loss = ops::sum_all(&ops::square(&p));
            backward(&loss).unwrap();
            adam.step().unwrap();
        }
        p.to_vec().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn adam_reports_non_finite_gradients_by_name() {
    let p = Tensor64::scalar(1.0).with_requires_grad(true);
    let loss = ops::mul_scalar(&p, f64::NAN);
    backward(&loss).unwrap();
    let mut adam = Adam::new(vec![("enc.weight".into(), p)], 1e-3, 0.0, 0.9);
    let err = adam.step().unwrap_err();
    assert!(err.to_string().contains("enc.weight"));
}

#[test]
fn conv_layer_shapes_and_params() {
    let mut rng = seeded_rng(9);
    let conv = dagan_nn::Conv2d::<f64>::new(3, 8, 3, 2, ops::Padding::Same, true, &mut rng);
    let y = conv.forward(&Tensor64::zeros(&[2, 3, 8, 8])).unwrap();
    assert_eq!(y.shape(), &[2, 8, 4, 4]);
    let mut named = Vec::new();
    conv.named_params("blk.conv", &mut named);
    let names: Vec<&str> = named.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, vec!["blk.conv.weight", "blk.conv.bias"]);
}
