use crate::autograd::OpNode;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{assert_same_shape, broadcast_shape, broadcast_to, output};

struct AddOp<T: Scalar> {
    a: Tensor<T>,
    b: Tensor<T>,
}

impl<T: Scalar> OpNode<T> for AddOp<T> {
    fn name(&self) -> &'static str {
        "add"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.a.clone(), self.b.clone()]
    }
    fn vjp(&self, _out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![
            needs[0].then(|| grad.clone()),
            needs[1].then(|| grad.clone()),
        ]
    }
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    assert_same_shape("add", a, b);
    let data = &*a.data() + &*b.data();
    output(
        data,
        AddOp {
            a: a.clone(),
            b: b.clone(),
        },
    )
}

struct SubOp<T: Scalar> {
    a: Tensor<T>,
    b: Tensor<T>,
}

impl<T: Scalar> OpNode<T> for SubOp<T> {
    fn name(&self) -> &'static str {
        "sub"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.a.clone(), self.b.clone()]
    }
    fn vjp(&self, _out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![needs[0].then(|| grad.clone()), needs[1].then(|| neg(grad))]
    }
}

pub fn sub<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    assert_same_shape("sub", a, b);
    let data = &*a.data() - &*b.data();
    output(
        data,
        SubOp {
            a: a.clone(),
            b: b.clone(),
        },
    )
}

struct MulOp<T: Scalar> {
    a: Tensor<T>,
    b: Tensor<T>,
}

impl<T: Scalar> OpNode<T> for MulOp<T> {
    fn name(&self) -> &'static str {
        "mul"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.a.clone(), self.b.clone()]
    }
    fn vjp(&self, _out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![
            needs[0].then(|| mul(grad, &self.b)),
            needs[1].then(|| mul(grad, &self.a)),
        ]
    }
}

pub fn mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    assert_same_shape("mul", a, b);
    let data = &*a.data() * &*b.data();
    output(
        data,
        MulOp {
            a: a.clone(),
            b: b.clone(),
        },
    )
}

struct NegOp<T: Scalar> {
    x: Tensor<T>,
}

impl<T: Scalar> OpNode<T> for NegOp<T> {
    fn name(&self) -> &'static str {
        "neg"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.x.clone()]
    }
    fn vjp(&self, _out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![needs[0].then(|| neg(grad))]
    }
}

pub fn neg<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().mapv(|v| -v);
    output(data, NegOp { x: x.clone() })
}

struct AddScalarOp<T: Scalar> {
    x: Tensor<T>,
}

impl<T: Scalar> OpNode<T> for AddScalarOp<T> {
    fn name(&self) -> &'static str {
        "add_scalar"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.x.clone()]
    }
    fn vjp(&self, _out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![needs[0].then(|| grad.clone())]
    }
}

pub fn add_scalar<T: Scalar>(x: &Tensor<T>, c: T) -> Tensor<T> {
    let data = x.data().mapv(|v| v + c);
    output(data, AddScalarOp { x: x.clone() })
}

struct MulScalarOp<T: Scalar> {
    x: Tensor<T>,
    c: T,
}

impl<T: Scalar> OpNode<T> for MulScalarOp<T> {
    fn name(&self) -> &'static str {
        "mul_scalar"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.x.clone()]
    }
    fn vjp(&self, _out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![needs[0].then(|| mul_scalar(grad, self.c))]
    }
}

pub fn mul_scalar<T: Scalar>(x: &Tensor<T>, c: T) -> Tensor<T> {
    let data = x.data().mapv(|v| v * c);
    output(data, MulScalarOp { x: x.clone(), c })
}

struct PowfConstOp<T: Scalar> {
    x: Tensor<T>,
    p: f64,
}

impl<T: Scalar> OpNode<T> for PowfConstOp<T> {
    fn name(&self) -> &'static str {
        "powf_const"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.x.clone()]
    }
    fn vjp(&self, _out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        // d/dx x^p = p * x^(p-1)
        vec![needs[0].then(|| {
            mul_scalar(
                &mul(grad, &powf_const(&self.x, self.p - 1.0)),
                T::cast(self.p),
            )
        })]
    }
}

/// Elementwise `x^p` for a fixed exponent. Callers are responsible for
/// keeping `x` in the domain where the power is differentiable.
pub fn powf_const<T: Scalar>(x: &Tensor<T>, p: f64) -> Tensor<T> {
    let pc = T::cast(p);
    let data = x.data().mapv(|v| v.powf(pc));
    output(data, PowfConstOp { x: x.clone(), p })
}

struct ExpOp<T: Scalar> {
    x: Tensor<T>,
}

impl<T: Scalar> OpNode<T> for ExpOp<T> {
    fn name(&self) -> &'static str {
        "exp"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.x.clone()]
    }
    fn vjp(&self, out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![needs[0].then(|| mul(grad, out))]
    }
}

pub fn exp<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().mapv(|v| v.exp());
    output(data, ExpOp { x: x.clone() })
}

struct LnOp<T: Scalar> {
    x: Tensor<T>,
}

impl<T: Scalar> OpNode<T> for LnOp<T> {
    fn name(&self) -> &'static str {
        "ln"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.x.clone()]
    }
    fn vjp(&self, _out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![needs[0].then(|| mul(grad, &powf_const(&self.x, -1.0)))]
    }
}

pub fn ln<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().mapv(|v| v.ln());
    output(data, LnOp { x: x.clone() })
}

struct TanhOp<T: Scalar> {
    x: Tensor<T>,
}

impl<T: Scalar> OpNode<T> for TanhOp<T> {
    fn name(&self) -> &'static str {
        "tanh"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.x.clone()]
    }
    fn vjp(&self, out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        // d tanh = 1 - tanh^2
        vec![needs[0].then(|| mul(grad, &add_scalar(&neg(&square(out)), T::one())))]
    }
}

pub fn tanh<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().mapv(|v| v.tanh());
    output(data, TanhOp { x: x.clone() })
}

pub fn square<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    mul(x, x)
}

/// `sqrt(x + eps)`; the floor keeps the gradient finite at x = 0.
pub fn sqrt_eps<T: Scalar>(x: &Tensor<T>, eps: f64) -> Tensor<T> {
    powf_const(&add_scalar(x, T::cast(eps)), 0.5)
}

pub fn div<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    mul(a, &powf_const(b, -1.0))
}

fn broadcast_pair<T: Scalar>(op: &str, a: &Tensor<T>, b: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let shape = broadcast_shape(a.shape(), b.shape())
        .unwrap_or_else(|| panic!("{op}: incompatible shapes {:?} vs {:?}", a.shape(), b.shape()));
    let ab = if a.shape() == shape.as_slice() {
        a.clone()
    } else {
        broadcast_to(a, &shape)
    };
    let bb = if b.shape() == shape.as_slice() {
        b.clone()
    } else {
        broadcast_to(b, &shape)
    };
    (ab, bb)
}

/// `add` with numpy-style broadcasting.
pub fn addb<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (a, b) = broadcast_pair("addb", a, b);
    add(&a, &b)
}

pub fn subb<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (a, b) = broadcast_pair("subb", a, b);
    sub(&a, &b)
}

pub fn mulb<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (a, b) = broadcast_pair("mulb", a, b);
    mul(&a, &b)
}

pub fn divb<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (a, b) = broadcast_pair("divb", a, b);
    div(&a, &b)
}
