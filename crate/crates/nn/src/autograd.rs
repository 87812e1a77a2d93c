use std::collections::{HashMap, HashSet};

use crate::error::{NnError, Result};
use crate::ops;
use crate::scalar::Scalar;
use crate::tensor::{NoGradGuard, Tensor};

/// A recorded operation: the edge set of the reverse-mode graph.
///
/// `vjp` maps the gradient at the output to gradients at each input. The
/// returned tensors are built with ordinary tensor ops, so when gradient
/// recording stays enabled the VJP itself is differentiable (double
/// backward, needed by the gradient penalty).
pub(crate) trait OpNode<T: Scalar> {
    fn name(&self) -> &'static str;
    fn inputs(&self) -> Vec<Tensor<T>>;
    /// One entry per input, in the same order as `inputs()`; entries where
    /// `needs` is `false` may be `None`.
    fn vjp(&self, output: &Tensor<T>, grad: &Tensor<T>, needs: &[bool]) -> Vec<Option<Tensor<T>>>;
}

/// Reverse topological order of the graph rooted at `root` (root first),
/// following only edges whose input was gradient-live when the op was
/// recorded. Inputs frozen at record time are invisible here, which is
/// what makes a temporary `set_requires_grad(false)` freeze stick.
fn toposort<T: Scalar>(root: &Tensor<T>) -> Vec<Tensor<T>> {
    let mut order: Vec<Tensor<T>> = Vec::new();
    let mut seen: HashSet<u64> = HashSet::new();
    // Iterative DFS; (node, child cursor) pairs.
    let mut stack: Vec<(Tensor<T>, usize)> = vec![(root.clone(), 0)];
    seen.insert(root.id());
    while let Some((node, cursor)) = stack.pop() {
        let children = match node.op() {
            Some(op) => op.inputs(),
            None => Vec::new(),
        };
        if cursor < children.len() {
            stack.push((node.clone(), cursor + 1));
            if node.live_mask()[cursor] {
                let child = children[cursor].clone();
                if seen.insert(child.id()) {
                    stack.push((child, 0));
                }
            }
        } else {
            order.push(node);
        }
    }
    order.reverse();
    order
}

/// Which nodes gradient flow should be propagated into. `targets = None`
/// means "everything that requires grad"; otherwise only nodes from which
/// one of the target ids can be reached.
fn compute_reach<T: Scalar>(order: &[Tensor<T>], targets: Option<&HashSet<u64>>) -> HashSet<u64> {
    match targets {
        None => order
            .iter()
            .filter(|t| t.requires_grad())
            .map(|t| t.id())
            .collect(),
        Some(goal) => {
            let mut reach: HashSet<u64> = HashSet::new();
            // `order` is root-first; walk leaves-first so children settle first.
            for node in order.iter().rev() {
                let wanted = goal.contains(&node.id())
                    || match node.op() {
                        Some(op) => op
                            .inputs()
                            .iter()
                            .zip(node.live_mask())
                            .any(|(i, live)| *live && reach.contains(&i.id())),
                        None => false,
                    };
                if wanted {
                    reach.insert(node.id());
                }
            }
            reach
        }
    }
}

fn seed_grad<T: Scalar>(root: &Tensor<T>) -> Tensor<T> {
    Tensor::from_array(ndarray::ArrayD::from_elem(
        ndarray::IxDyn(root.shape()),
        T::one(),
    ))
}

fn run_backward<T: Scalar>(
    root: &Tensor<T>,
    order: &[Tensor<T>],
    targets: Option<&HashSet<u64>>,
    create_graph: bool,
) -> HashMap<u64, Tensor<T>> {
    let guard = if create_graph {
        None
    } else {
        Some(NoGradGuard::new())
    };
    let reach = compute_reach(order, targets);
    let mut grads: HashMap<u64, Tensor<T>> = HashMap::new();
    grads.insert(root.id(), seed_grad(root));
    for node in order {
        let Some(op) = node.op() else { continue };
        let Some(grad) = grads.get(&node.id()).cloned() else {
            // No flow reached this node (e.g. a sibling of the branch the
            // loss actually uses). Its gradient is zero; nothing to push.
            continue;
        };
        let inputs = op.inputs();
        let needs: Vec<bool> = inputs
            .iter()
            .zip(node.live_mask())
            .map(|(i, live)| *live && reach.contains(&i.id()))
            .collect();
        if !needs.iter().any(|n| *n) {
            continue;
        }
        let input_grads = op.vjp(node, &grad, &needs);
        debug_assert_eq!(input_grads.len(), inputs.len(), "vjp arity in {}", op.name());
        for ((input, ig), need) in inputs.iter().zip(input_grads).zip(&needs) {
            if !need {
                continue;
            }
            let Some(ig) = ig else { continue };
            debug_assert_eq!(
                ig.shape(),
                input.shape(),
                "vjp shape for an input of {}",
                op.name()
            );
            let entry = match grads.remove(&input.id()) {
                Some(prev) => ops::add(&prev, &ig),
                None => ig,
            };
            grads.insert(input.id(), entry);
        }
    }
    drop(guard);
    grads
}

/// Backpropagates from `root`, accumulating into `.grad` of every reachable
/// tensor that requires gradients. Stored gradients are detached values.
pub fn backward<T: Scalar>(root: &Tensor<T>) -> Result<()> {
    let order = toposort(root);
    if !order.iter().any(|t| t.is_leaf() && t.requires_grad()) {
        return Err(NnError::NoGradPath {
            name: root.debug_name(),
        });
    }
    let grads = run_backward(root, &order, None, false);
    for node in &order {
        if !node.requires_grad() {
            continue;
        }
        if let Some(g) = grads.get(&node.id()) {
            node.accumulate_grad(&g.detach());
        }
    }
    Ok(())
}

/// Gradients of `root` with respect to `wrt`, returned in the same order,
/// without touching any `.grad` field. With `create_graph` the results carry
/// their own recorded graph and can be differentiated again.
pub fn grad_wrt<T: Scalar>(
    root: &Tensor<T>,
    wrt: &[&Tensor<T>],
    create_graph: bool,
) -> Result<Vec<Tensor<T>>> {
    let order = toposort(root);
    let targets: HashSet<u64> = wrt.iter().map(|t| t.id()).collect();
    let grads = run_backward(root, &order, Some(&targets), create_graph);
    let mut out = Vec::with_capacity(wrt.len());
    for t in wrt {
        match grads.get(&t.id()) {
            Some(g) => out.push(g.clone()),
            None => {
                return Err(NnError::NoGradPath {
                    name: t.debug_name(),
                })
            }
        }
    }
    Ok(out)
}

/// Leaf tensors with `requires_grad` reachable from `root` along
/// gradient-live edges, ordered by first encounter. Lets callers audit
/// exactly which parameters and inputs a loss depends on.
pub fn reachable_leaves<T: Scalar>(root: &Tensor<T>) -> Vec<Tensor<T>> {
    toposort(root)
        .into_iter()
        .rev() // toposort is root-first; reversed gives DFS encounter order
        .filter(|t| t.is_leaf() && t.requires_grad())
        .collect()
}
