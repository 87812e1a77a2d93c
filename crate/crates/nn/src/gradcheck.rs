use crate::autograd::grad_wrt;
use crate::error::{NnError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct InputReport {
    pub max_rel_err: f64,
    /// Flat coordinate where the worst error occurred.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub per_input: Vec<InputReport>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.per_input
            .iter()
            .map(|r| r.max_rel_err)
            .fold(0.0, f64::max)
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1.0)
}

/// Compares analytic gradients of the scalar-valued `f` against central
/// finite differences with step `h`, per input coordinate.
///
/// `f` must be deterministic; inputs are perturbed in place and restored.
/// Intended for the f64 instantiation (h = 1e-5); an f32 run needs a larger
/// step and looser tolerance.
pub fn grad_check<T: Scalar, F>(f: F, inputs: &[Tensor<T>], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<T>]) -> Result<Tensor<T>>,
{
    for t in inputs {
        t.set_requires_grad(true);
    }
    let loss = f(inputs)?;
    if loss.len() != 1 {
        return Err(NnError::InvalidArg {
            op: "grad_check",
            msg: format!("f must be scalar-valued, got shape {:?}", loss.shape()),
        });
    }
    let wrt: Vec<&Tensor<T>> = inputs.iter().collect();
    let analytic = grad_wrt(&loss, &wrt, false)?;

    let mut per_input = Vec::with_capacity(inputs.len());
    for (input, a) in inputs.iter().zip(&analytic) {
        let n = input.len();
        let mut report = InputReport {
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for flat in 0..n {
            let orig = input.data().iter().nth(flat).copied().unwrap();
            // Probes re-run f with recording left on: f may itself contain
            // an inner grad_wrt (gradient-penalty style), which needs a tape.
            let probe = |v: T| -> Result<f64> {
                *input.data_mut().iter_mut().nth(flat).unwrap() = v;
                let out = f(inputs)?;
                let val = out.item().as_f64();
                if !val.is_finite() {
                    return Err(NnError::NonFiniteProbe {
                        input: input.debug_name(),
                        index: flat,
                    });
                }
                Ok(val)
            };
            let hv = T::cast(h);
            let plus = probe(orig + hv);
            let minus = plus.and_then(|p| probe(orig - hv).map(|m| (p, m)));
            *input.data_mut().iter_mut().nth(flat).unwrap() = orig;
            let (plus, minus) = minus?;
            let numeric = (plus - minus) / (2.0 * h);
            let ana = a.data().iter().nth(flat).copied().unwrap().as_f64();
            if !ana.is_finite() {
                return Err(NnError::NonFiniteProbe {
                    input: input.debug_name(),
                    index: flat,
                });
            }
            let e = rel_err(ana, numeric);
            if e >= report.max_rel_err {
                report.max_rel_err = e;
                report.worst_index = flat;
                report.analytic = ana;
                report.numeric = numeric;
            }
        }
        per_input.push(report);
    }
    Ok(GradCheckReport { per_input })
}
