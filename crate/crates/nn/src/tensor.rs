use std::cell::{Cell, Ref, RefCell, RefMut};
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::autograd::OpNode;
use crate::scalar::Scalar;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

pub(crate) fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// RAII guard that disables gradient recording on the current thread.
pub struct NoGradGuard {
    prev: bool,
}

impl NoGradGuard {
    #[allow(clippy::new_without_default)]
    pub fn new() -> Self {
        let prev = GRAD_ENABLED.with(|g| g.replace(false));
        NoGradGuard { prev }
    }
}

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        let prev = self.prev;
        GRAD_ENABLED.with(|g| g.set(prev));
    }
}

/// Runs `f` with gradient recording disabled.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let _guard = NoGradGuard::new();
    f()
}

pub(crate) struct TensorInner<T: Scalar> {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<ArrayD<T>>,
    grad: RefCell<Option<Tensor<T>>>,
    op: Option<Box<dyn OpNode<T>>>,
    /// Which of `op`'s inputs required gradients when the op was recorded.
    /// Frozen-at-record inputs stay severed even if unfrozen later, so a
    /// temporary freeze during a forward pass is honored by backward.
    live_mask: Vec<bool>,
    requires_grad: Cell<bool>,
    name: RefCell<Option<String>>,
}

/// Dense n-dimensional array with reverse-mode gradient tracking.
///
/// A tensor is a cheap handle (reference-counted) onto its storage and the
/// operation that produced it; cloning shares both. The recorded operation
/// graph is walked by [`crate::backward`] and [`crate::grad_wrt`].
pub struct Tensor<T: Scalar> {
    inner: Rc<TensorInner<T>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Scalar> Tensor<T> {
    fn construct(data: ArrayD<T>, op: Option<Box<dyn OpNode<T>>>, requires_grad: bool) -> Self {
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().to_owned()
        };
        let live_mask = op
            .as_ref()
            .map(|op| op.inputs().iter().map(|t| t.requires_grad()).collect())
            .unwrap_or_default();
        let shape = data.shape().to_vec();
        Tensor {
            inner: Rc::new(TensorInner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                op,
                live_mask,
                requires_grad: Cell::new(requires_grad),
                name: RefCell::new(None),
            }),
        }
    }

    /// Leaf tensor with no gradient tracking.
    pub fn from_array(data: ArrayD<T>) -> Self {
        Self::construct(data, None, false)
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(n, data.len(), "shape {:?} does not match data length {}", shape, data.len());
        Self::from_array(ArrayD::from_shape_vec(IxDyn(shape), data).unwrap())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::from_array(ArrayD::zeros(IxDyn(shape)))
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::from_array(ArrayD::from_elem(IxDyn(shape), value))
    }

    /// Rank-0 tensor holding a single value.
    pub fn scalar(value: T) -> Self {
        Self::from_array(ArrayD::from_elem(IxDyn(&[]), value))
    }

    /// Standard-normal samples drawn from `rng`.
    pub fn randn(shape: &[usize], rng: &mut impl Rng) -> Self {
        let n: usize = shape.iter().product();
        let data: Vec<T> = (0..n)
            .map(|_| T::cast(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Self::from_vec(shape, data)
    }

    /// Uniform samples on `[lo, hi)`.
    pub fn rand_uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Self {
        let n: usize = shape.iter().product();
        let data: Vec<T> = (0..n)
            .map(|_| T::cast(lo + (hi - lo) * rng.random::<f64>()))
            .collect();
        Self::from_vec(shape, data)
    }

    pub(crate) fn from_op(data: ArrayD<T>, op: Box<dyn OpNode<T>>) -> Self {
        Self::construct(data, Some(op), true)
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn ndim(&self) -> usize {
        self.inner.shape.len()
    }

    /// Number of elements.
    pub fn len(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> Ref<'_, ArrayD<T>> {
        self.inner.data.borrow()
    }

    /// Mutable access to the storage. Meant for leaf tensors (parameter
    /// updates, checkpoint restore); mutating a non-leaf invalidates the
    /// values any recorded graph was built from.
    pub fn data_mut(&self) -> RefMut<'_, ArrayD<T>> {
        self.inner.data.borrow_mut()
    }

    /// Flat copy of the storage in row-major order.
    pub fn to_vec(&self) -> Vec<T> {
        self.data().iter().copied().collect()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.len(), 1, "item() on tensor of shape {:?}", self.shape());
        *self.data().iter().next().unwrap()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad.get()
    }

    pub fn set_requires_grad(&self, requires: bool) {
        self.inner.requires_grad.set(requires);
    }

    /// Builder-style `set_requires_grad`.
    pub fn with_requires_grad(self, requires: bool) -> Self {
        self.set_requires_grad(requires);
        self
    }

    pub fn is_leaf(&self) -> bool {
        self.inner.op.is_none()
    }

    pub(crate) fn op(&self) -> Option<&dyn OpNode<T>> {
        self.inner.op.as_deref()
    }

    /// Record-time gradient participation of each op input (empty for
    /// leaves); see `TensorInner::live_mask`.
    pub(crate) fn live_mask(&self) -> &[bool] {
        &self.inner.live_mask
    }

    pub fn grad(&self) -> Option<Tensor<T>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad(&self, g: &Tensor<T>) {
        let mut slot = self.inner.grad.borrow_mut();
        let next = match slot.take() {
            Some(prev) => {
                let sum = &*prev.data() + &*g.data();
                Tensor::from_array(sum)
            }
            None => Tensor::from_array(g.data().clone()),
        };
        *slot = Some(next);
    }

    /// Copy of the values as a fresh leaf outside any recorded graph.
    pub fn detach(&self) -> Tensor<T> {
        Tensor::from_array(self.data().clone())
    }

    pub fn name(&self) -> Option<String> {
        self.inner.name.borrow().clone()
    }

    pub fn set_name(&self, name: impl Into<String>) {
        *self.inner.name.borrow_mut() = Some(name.into());
    }

    /// Name if set, otherwise a placeholder with the tensor id.
    pub fn debug_name(&self) -> String {
        self.name().unwrap_or_else(|| format!("tensor#{}", self.id()))
    }

    pub fn same_tensor(&self, other: &Tensor<T>) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    pub fn all_finite(&self) -> bool {
        self.data().iter().all(|v| v.is_finite())
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.id())
            .field("shape", &self.shape())
            .field("requires_grad", &self.requires_grad())
            .field("op", &self.op().map(|o| o.name()))
            .finish()
    }
}
