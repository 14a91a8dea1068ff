//! Reverse-mode automatic differentiation over dense CPU tensors.
//!
//! A [`Tensor`] is a cheaply clonable handle to an immutable value buffer
//! plus the bookkeeping needed to back-propagate: parent handles and a
//! backward closure that scatters the output gradient into the parents.
//! Graphs are built eagerly by the ops in [`ops`] and [`conv`]; calling
//! [`Tensor::backward`] on a scalar walks the graph once in reverse
//! topological order.
//!
//! Tensors whose ancestry contains no gradient-requiring leaf carry no
//! parents and no closure, so frozen-model inference allocates nothing
//! beyond the value buffers.

mod conv;
mod grad_check;
mod ops;

pub use grad_check::{grad_check, GradCheckFailure, GradCheckReport, FD_STEP};
pub use ops::concat;

use crate::num::Real;
use std::cell::{Ref, RefCell};
use std::collections::HashSet;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

type BackwardFn<F> = Box<dyn Fn(&[F])>;

pub(crate) struct Node<F: Real> {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<F>>,
    grad: RefCell<Option<Vec<F>>>,
    requires_grad: bool,
    parents: Vec<Tensor<F>>,
    backward: Option<BackwardFn<F>>,
}

pub struct Tensor<F: Real> {
    node: Rc<Node<F>>,
}

impl<F: Real> Clone for Tensor<F> {
    fn clone(&self) -> Self {
        Tensor {
            node: Rc::clone(&self.node),
        }
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<F: Real> Tensor<F> {
    fn make(
        shape: Vec<usize>,
        values: Vec<F>,
        requires_grad: bool,
        parents: Vec<Tensor<F>>,
        backward: Option<BackwardFn<F>>,
    ) -> Self {
        assert_eq!(
            numel(&shape),
            values.len(),
            "shape {:?} does not match value count {}",
            shape,
            values.len()
        );
        Tensor {
            node: Rc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RefCell::new(values),
                grad: RefCell::new(None),
                requires_grad,
                parents,
                backward,
            }),
        }
    }

    /// Constant tensor; never receives gradient.
    pub fn from_vec(shape: &[usize], values: Vec<F>) -> Self {
        Self::make(shape.to_vec(), values, false, Vec::new(), None)
    }

    /// Gradient-requiring leaf (a parameter or a checked input).
    pub fn leaf(shape: &[usize], values: Vec<F>) -> Self {
        Self::make(shape.to_vec(), values, true, Vec::new(), None)
    }

    pub fn scalar(v: F) -> Self {
        Self::from_vec(&[1], vec![v])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::from_vec(shape, vec![F::ZERO; numel(shape)])
    }

    pub fn full(shape: &[usize], v: F) -> Self {
        Self::from_vec(shape, vec![v; numel(shape)])
    }

    pub(crate) fn from_op(
        shape: Vec<usize>,
        values: Vec<F>,
        parents: Vec<Tensor<F>>,
        backward: BackwardFn<F>,
    ) -> Self {
        let requires = parents.iter().any(|p| p.requires_grad());
        if requires {
            Self::make(shape, values, true, parents, Some(backward))
        } else {
            // Inference path: drop the graph edges entirely.
            Self::make(shape, values, false, Vec::new(), None)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn numel(&self) -> usize {
        numel(&self.node.shape)
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    pub fn values(&self) -> Ref<'_, Vec<F>> {
        self.node.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<F> {
        self.node.data.borrow().clone()
    }

    /// Scalar extraction; panics unless the tensor has exactly one element.
    pub fn item(&self) -> F {
        let data = self.node.data.borrow();
        assert_eq!(data.len(), 1, "item() on tensor of shape {:?}", self.shape());
        data[0]
    }

    /// Accumulated gradient, if backward has reached this tensor.
    pub fn grad(&self) -> Option<Vec<F>> {
        self.node.grad.borrow().clone()
    }

    /// Overwrites the value buffer. Only optimizers touch this, between
    /// steps; graphs built from the old values must already be dropped.
    pub fn set_values(&self, values: &[F]) {
        let mut data = self.node.data.borrow_mut();
        assert_eq!(data.len(), values.len());
        data.copy_from_slice(values);
    }

    pub fn clear_grad(&self) {
        *self.node.grad.borrow_mut() = None;
    }

    /// True when both handles point at the same underlying buffer. Used by
    /// the weight-sharing assertions.
    pub fn same_node(&self, other: &Tensor<F>) -> bool {
        Rc::ptr_eq(&self.node, &other.node)
    }

    pub(crate) fn accumulate_grad(&self, delta: &[F]) {
        if !self.node.requires_grad {
            return;
        }
        let mut slot = self.node.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += *di;
                }
            }
            None => *slot = Some(delta.to_vec()),
        }
    }

    /// Reverse accumulation from a scalar. Gradients add up across calls;
    /// use [`Tensor::clear_grad`] (or fresh leaves) between steps.
    pub fn backward(&self) {
        assert_eq!(
            self.numel(),
            1,
            "backward() needs a scalar, got shape {:?}",
            self.shape()
        );
        if !self.node.requires_grad {
            return;
        }

        // Iterative post-order DFS: children complete after their parents,
        // so reversing the order visits every node before its parents.
        let mut order: Vec<Tensor<F>> = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor<F>, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.node.id);
        while let Some((t, child)) = stack.pop() {
            if child < t.node.parents.len() {
                let next = t.node.parents[child].clone();
                stack.push((t, child + 1));
                if next.node.requires_grad && visited.insert(next.node.id) {
                    stack.push((next, 0));
                }
            } else {
                order.push(t);
            }
        }

        self.accumulate_grad(&[F::ONE]);
        for t in order.iter().rev() {
            if let Some(f) = &t.node.backward {
                let grad = t.node.grad.borrow();
                if let Some(g) = grad.as_ref() {
                    f(g);
                }
            }
        }
    }
}

impl<F: Real> std::fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad)
            .finish()
    }
}
