use ndarray::Ix2;

use crate::autograd::OpNode;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{output, permute};

struct MatmulOp<T: Scalar> {
    a: Tensor<T>,
    b: Tensor<T>,
}

impl<T: Scalar> OpNode<T> for MatmulOp<T> {
    fn name(&self) -> &'static str {
        "matmul"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.a.clone(), self.b.clone()]
    }
    fn vjp(&self, _out: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>> {
        vec![
            needs[0].then(|| matmul(grad, &permute(&self.b, &[1, 0]))),
            needs[1].then(|| matmul(&permute(&self.a, &[1, 0]), grad)),
        ]
    }
}

/// 2-D matrix product `[m,k] x [k,n] -> [m,n]`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    assert_eq!(a.ndim(), 2, "matmul: lhs shape {:?}", a.shape());
    assert_eq!(b.ndim(), 2, "matmul: rhs shape {:?}", b.shape());
    assert_eq!(
        a.shape()[1],
        b.shape()[0],
        "matmul: inner dims {:?} x {:?}",
        a.shape(),
        b.shape()
    );
    let data = {
        let ad = a.data();
        let bd = b.data();
        let a2 = ad.view().into_dimensionality::<Ix2>().unwrap();
        let b2 = bd.view().into_dimensionality::<Ix2>().unwrap();
        a2.dot(&b2).into_dyn()
    };
    output(
        data,
        MatmulOp {
            a: a.clone(),
            b: b.clone(),
        },
    )
}
