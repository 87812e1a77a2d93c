use dagan_nn::{Scalar, Tensor};

use crate::error::{config_err, Result};

/// Angle threshold below which spherical interpolation degrades to linear
/// (the sine ratio becomes numerically meaningless there).
const SLERP_MIN_ANGLE: f64 = 1e-6;

/// Spherical interpolation between two latent vectors:
/// `sin((1−t)Ω)/sin Ω · z0 + sin(tΩ)/sin Ω · z1` with `Ω` the angle
/// between them. Endpoints are returned exactly; near-parallel inputs
/// fall back to linear interpolation.
pub fn slerp<T: Scalar>(z0: &Tensor<T>, z1: &Tensor<T>, t: f64) -> Result<Tensor<T>> {
    if z0.shape() != z1.shape() {
        return Err(config_err!(
            "slerp endpoints have shapes {:?} and {:?}",
            z0.shape(),
            z1.shape()
        ));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(config_err!("slerp parameter t={t} outside [0, 1]"));
    }
    let a: Vec<f64> = z0.to_vec().iter().map(|v| v.as_f64()).collect();
    let b: Vec<f64> = z1.to_vec().iter().map(|v| v.as_f64()).collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (na, nb) = (norm(&a), norm(&b));
    if na == 0.0 || nb == 0.0 {
        return Err(config_err!("slerp endpoints must be nonzero vectors"));
    }
    if t == 0.0 {
        return Ok(z0.detach());
    }
    if t == 1.0 {
        return Ok(z1.detach());
    }
    let cos = (a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)).clamp(-1.0, 1.0);
    let omega = cos.acos();
    let (wa, wb) = if omega < SLERP_MIN_ANGLE {
        (1.0 - t, t)
    } else {
        let s = omega.sin();
        (((1.0 - t) * omega).sin() / s, (t * omega).sin() / s)
    };
    let data = a
        .iter()
        .zip(&b)
        .map(|(x, y)| T::cast(wa * x + wb * y))
        .collect();
    Ok(Tensor::from_vec(z0.shape(), data))
}
