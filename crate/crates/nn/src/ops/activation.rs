use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::mul;

/// `max(x, slope*x)`; the mask is treated as constant, giving the usual
/// almost-everywhere gradient (1 for x>0, slope otherwise).
pub fn leaky_relu<T: Scalar>(x: &Tensor<T>, slope: f64) -> Tensor<T> {
    assert!((0.0..1.0).contains(&slope), "leaky_relu slope {slope} outside [0,1)");
    let s = T::cast(slope);
    let mask = Tensor::from_array(
        x.data()
            .mapv(|v| if v > T::zero() { T::one() } else { s }),
    );
    mul(x, &mask)
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    leaky_relu(x, 0.0)
}

/// Inverted dropout: training mode zeroes each element with probability
/// `rate` and scales survivors by 1/(1-rate); eval mode is the identity.
pub fn dropout<T: Scalar>(x: &Tensor<T>, rate: f64, training: bool, rng: &mut impl Rng) -> Tensor<T> {
    assert!((0.0..1.0).contains(&rate), "dropout rate {rate} outside [0,1)");
    if !training || rate == 0.0 {
        return x.clone();
    }
    let keep = 1.0 - rate;
    let scale = T::cast(1.0 / keep);
    let mask_data: Vec<T> = (0..x.len())
        .map(|_| {
            if rng.random::<f64>() < keep {
                scale
            } else {
                T::zero()
            }
        })
        .collect();
    let mask = Tensor::from_vec(x.shape(), mask_data);
    mul(x, &mask)
}
