use ndarray::ArrayD;

use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Adam with bias correction over a fixed, ordered parameter list.
///
/// Moments are addressed by parameter name so optimizer state survives a
/// checkpoint round-trip even if construction order were to change.
pub struct Adam<T: Scalar> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step_count: u64,
    params: Vec<(String, Tensor<T>)>,
    m: Vec<ArrayD<T>>,
    v: Vec<ArrayD<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: Vec<(String, Tensor<T>)>, lr: f64, beta1: f64, beta2: f64) -> Self {
        let m = params
            .iter()
            .map(|(_, p)| ArrayD::zeros(p.data().raw_dim()))
            .collect();
        let v = params
            .iter()
            .map(|(_, p)| ArrayD::zeros(p.data().raw_dim()))
            .collect();
        Adam {
            lr,
            beta1,
            beta2,
            epsilon: crate::layers::EPSILON,
            step_count: 0,
            params,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn params(&self) -> &[(String, Tensor<T>)] {
        &self.params
    }

    pub fn zero_grads(&self) {
        for (_, p) in &self.params {
            p.zero_grad();
        }
    }

    /// Applies one update from the gradients currently stored on the
    /// parameters. Parameters whose grad is absent are left untouched.
    pub fn step(&mut self) -> Result<()> {
        self.step_count += 1;
        let t = self.step_count as i32;
        let b1 = T::cast(self.beta1);
        let b2 = T::cast(self.beta2);
        let bc1 = T::cast(1.0 - self.beta1.powi(t));
        let bc2 = T::cast(1.0 - self.beta2.powi(t));
        let lr = T::cast(self.lr);
        let eps = T::cast(self.epsilon);
        let one = T::one();
        for (i, (name, p)) in self.params.iter().enumerate() {
            let Some(grad) = p.grad() else { continue };
            let g = grad.data();
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteGrad { name: name.clone() });
            }
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let mut data = p.data_mut();
            ndarray::Zip::from(&mut *data)
                .and(m)
                .and(v)
                .and(&*g)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p = *p - lr * mhat / (vhat.sqrt() + eps);
                });
        }
        Ok(())
    }

    /// Moment arrays for persistence, keyed by parameter name.
    pub fn moments(&self) -> impl Iterator<Item = (&str, &ArrayD<T>, &ArrayD<T>)> {
        self.params
            .iter()
            .zip(self.m.iter().zip(&self.v))
            .map(|((name, _), (m, v))| (name.as_str(), m, v))
    }

    /// Restores step count and moments (by parameter name) from a checkpoint.
    pub fn restore(
        &mut self,
        step_count: u64,
        mut lookup: impl FnMut(&str) -> Option<(ArrayD<T>, ArrayD<T>)>,
    ) -> Result<()> {
        self.step_count = step_count;
        for (i, (name, p)) in self.params.iter().enumerate() {
            let Some((m, v)) = lookup(name) else {
                return Err(NnError::InvalidArg {
                    op: "adam_restore",
                    msg: format!("missing optimizer moments for parameter {name}"),
                });
            };
            if m.shape() != p.shape() || v.shape() != p.shape() {
                return Err(NnError::ShapeMismatch {
                    op: "adam_restore",
                    lhs: m.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
            self.m[i] = m;
            self.v[i] = v;
        }
        Ok(())
    }
}
