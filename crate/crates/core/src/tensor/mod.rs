//! Dense tensors with reverse-mode automatic differentiation.
//!
//! Graphs are built dynamically during a forward pass: every operation returns
//! a new [`Tensor`] holding its value, its shape and (when any input requires a
//! gradient) a lineage record with the parent handles and a backward closure.
//! Calling [`Tensor::backward`] on a scalar output walks the graph once in
//! reverse topological order and accumulates gradients into every visited
//! node's grad slot. Leaves persist across forward passes (parameters), so
//! their gradients accumulate until [`Tensor::zero_grad`].

mod gradcheck;
mod ops;
mod param;

pub use gradcheck::{grad_check, GradCheckConfig};
pub use ops::AttnMask;
pub use param::{InitSpec, ParamStore, Parameter};

use std::cell::{Ref, RefCell};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

static NEXT_ID: AtomicUsize = AtomicUsize::new(0);

type BackwardFn<T> = Box<dyn Fn(&[T]) -> Vec<Option<Vec<T>>>>;

struct Lineage<T: Scalar> {
    op: &'static str,
    parents: Vec<Tensor<T>>,
    backward: BackwardFn<T>,
}

struct Node<T: Scalar> {
    id: usize,
    shape: Vec<usize>,
    value: RefCell<Vec<T>>,
    grad: RefCell<Option<Vec<T>>>,
    requires_grad: bool,
    lineage: Option<Lineage<T>>,
}

/// Handle to a node of the computation graph. Cloning is cheap (shared).
pub struct Tensor<T: Scalar>(Rc<Node<T>>);

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.0.id)
            .field("shape", &self.0.shape)
            .field("op", &self.op_name())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

/// Summary of one backward traversal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackwardStats {
    pub nodes_visited: usize,
}

fn check_shape(values: usize, shape: &[usize]) {
    assert!(
        shape.iter().all(|&d| d > 0),
        "tensor dimensions must be positive, got {shape:?}"
    );
    assert_eq!(
        values,
        shape.iter().product::<usize>(),
        "value count does not match shape {shape:?}"
    );
}

impl<T: Scalar> Tensor<T> {
    fn make(
        value: Vec<T>,
        shape: Vec<usize>,
        requires_grad: bool,
        lineage: Option<Lineage<T>>,
    ) -> Self {
        check_shape(value.len(), &shape);
        Tensor(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            value: RefCell::new(value),
            grad: RefCell::new(None),
            requires_grad,
            lineage,
        }))
    }

    /// Constant tensor; never receives a gradient.
    pub fn constant(value: Vec<T>, shape: &[usize]) -> Self {
        Self::make(value, shape.to_vec(), false, None)
    }

    /// Leaf tensor that accumulates gradients (a parameter or a test input).
    pub fn leaf(value: Vec<T>, shape: &[usize]) -> Self {
        Self::make(value, shape.to_vec(), true, None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::constant(vec![T::zero(); n], shape)
    }

    pub fn scalar(x: T) -> Self {
        Self::constant(vec![x], &[1])
    }

    /// Result of an operation. Lineage is kept only if some parent needs a gradient.
    pub(crate) fn from_op(
        op: &'static str,
        value: Vec<T>,
        shape: Vec<usize>,
        parents: Vec<Tensor<T>>,
        backward: BackwardFn<T>,
    ) -> Self {
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        let lineage = requires_grad.then(|| Lineage {
            op,
            parents,
            backward,
        });
        Self::make(value, shape, requires_grad, lineage)
    }

    pub fn id(&self) -> usize {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        self.0.shape.iter().product()
    }

    /// Size of the last dimension.
    pub fn cols(&self) -> usize {
        *self.0.shape.last().expect("tensor has at least one dimension")
    }

    /// Product of all leading dimensions.
    pub fn rows(&self) -> usize {
        self.numel() / self.cols()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.lineage.is_none()
    }

    /// Operation tag of the node ("leaf" for leaves and constants).
    pub fn op_name(&self) -> &'static str {
        self.0.lineage.as_ref().map_or("leaf", |l| l.op)
    }

    pub fn parents(&self) -> Vec<Tensor<T>> {
        self.0
            .lineage
            .as_ref()
            .map(|l| l.parents.clone())
            .unwrap_or_default()
    }

    pub fn value(&self) -> Ref<'_, Vec<T>> {
        self.0.value.borrow()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.value.borrow().clone()
    }

    /// The single element of a one-element tensor.
    pub fn item(&self) -> T {
        let v = self.value();
        assert_eq!(v.len(), 1, "item() on a tensor with {} elements", v.len());
        v[0]
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        let mut g = self.0.grad.borrow_mut();
        match g.as_mut() {
            Some(buf) => buf.iter_mut().for_each(|x| *x = T::zero()),
            None => *g = Some(vec![T::zero(); self.numel()]),
        }
    }

    /// Overwrite a leaf's values, e.g. from the optimizer. Panics on non-leaves:
    /// values that participate in lineage are never mutated in place.
    pub fn set_value(&self, value: Vec<T>) {
        assert!(self.is_leaf(), "set_value on a non-leaf tensor");
        assert_eq!(value.len(), self.numel());
        *self.0.value.borrow_mut() = value;
    }

    pub fn update_value(&self, f: impl FnOnce(&mut [T])) {
        assert!(self.is_leaf(), "update_value on a non-leaf tensor");
        f(&mut self.0.value.borrow_mut());
    }

    fn accumulate_grad(&self, g: &[T]) {
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(buf) => buf.iter_mut().zip(g).for_each(|(a, &b)| *a += b),
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Reverse-mode sweep from a scalar output (seed gradient 1).
    pub fn backward(&self) -> Result<BackwardStats> {
        if self.numel() != 1 {
            return Err(Error::contract(format!(
                "backward requires a scalar output, got shape {:?}",
                self.shape()
            )));
        }
        Ok(self.backward_with(vec![T::one()]))
    }

    /// Reverse-mode sweep with an explicit output gradient.
    pub fn backward_with(&self, seed: Vec<T>) -> BackwardStats {
        assert_eq!(seed.len(), self.numel(), "seed gradient has wrong size");
        if !self.requires_grad() {
            return BackwardStats { nodes_visited: 0 };
        }
        let order = self.topological_order();
        let mut pending: HashMap<usize, Vec<T>> = HashMap::with_capacity(order.len());
        pending.insert(self.id(), seed);

        for node in order.iter().rev() {
            let Some(g) = pending.remove(&node.id()) else {
                continue;
            };
            node.accumulate_grad(&g);
            let Some(lineage) = &node.0.lineage else {
                continue;
            };
            let parent_grads = (lineage.backward)(&g);
            debug_assert_eq!(parent_grads.len(), lineage.parents.len());
            for (parent, pg) in lineage.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !parent.requires_grad() {
                    continue;
                }
                debug_assert_eq!(pg.len(), parent.numel(), "op {}", lineage.op);
                match pending.get_mut(&parent.id()) {
                    Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, &b)| *a += b),
                    None => {
                        pending.insert(parent.id(), pg);
                    }
                }
            }
        }
        BackwardStats {
            nodes_visited: order.len(),
        }
    }

    /// Post-order over nodes that require gradients: parents precede children.
    fn topological_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        let mut stack = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(lineage) = &t.0.lineage {
                for p in &lineage.parents {
                    if p.requires_grad() && !visited.contains(&p.id()) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        order
    }

    /// Number of distinct gradient-carrying nodes reachable from this one.
    pub fn graph_size(&self) -> usize {
        if self.requires_grad() {
            self.topological_order().len()
        } else {
            0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_requires_scalar() {
        let x = Tensor::<f64>::leaf(vec![1.0, 2.0], &[2]);
        assert!(matches!(x.backward(), Err(Error::Contract(_))));
    }

    #[test]
    fn shared_subexpression_is_visited_once() {
        let x = Tensor::<f64>::leaf(vec![1.5, -2.0, 0.5], &[3]);
        let y = x.mul(&x);
        let z = y.add(&y).add(&x).sum();
        let stats = z.backward().unwrap();
        assert_eq!(stats.nodes_visited, z.graph_size());
        assert_eq!(stats.nodes_visited, 5);
        // d/dx (2x^2 + x) = 4x + 1
        assert_eq!(x.grad().unwrap(), vec![7.0, -7.0, 3.0]);
    }

    #[test]
    fn zero_grad_clears_accumulated_gradients() {
        let x = Tensor::<f64>::leaf(vec![1.0, 2.0], &[2]);
        x.scale(3.0).sum().backward().unwrap();
        x.scale(3.0).sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![6.0, 6.0]);
        x.zero_grad();
        assert_eq!(x.grad().unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn constants_carry_no_lineage() {
        let a = Tensor::<f64>::constant(vec![1.0, 2.0], &[2]);
        let b = a.scale(2.0);
        assert!(!b.requires_grad());
        assert!(b.is_leaf());
        assert_eq!(b.to_vec(), vec![2.0, 4.0]);
    }

    #[test]
    #[should_panic(expected = "non-leaf")]
    fn set_value_rejects_interior_nodes() {
        let x = Tensor::<f64>::leaf(vec![1.0], &[1]);
        x.scale(2.0).set_value(vec![0.0]);
    }
}
