//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! Tensors form an implicit DAG: every non-leaf node keeps its parents alive
//! through `Rc` and carries a closure that turns the upstream gradient into
//! per-parent gradients. `backward` walks the graph in reverse topological
//! order and accumulates gradients into the `requires_grad` leaves.
//!
//! Graphs are single-threaded by construction (`Rc`); distinct graphs may
//! live on distinct threads.

mod conv;
mod ops;

pub use conv::UpsampleMode;

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{Error, Result};

type BackFn = Box<dyn Fn(&[f64]) -> Vec<Vec<f64>>>;

pub(crate) struct Inner {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    is_leaf: bool,
    grad: RefCell<Option<Vec<f64>>>,
    backward_done: Cell<bool>,
    parents: Vec<Tensor>,
    backward_fn: Option<BackFn>,
}

/// An n-dimensional array of f64 values, optionally tracked for gradients.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Inner>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    /// A constant tensor outside the gradient graph.
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        assert_eq!(
            numel(&shape),
            data.len(),
            "data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor {
            inner: Rc::new(Inner {
                shape,
                data,
                requires_grad: false,
                is_leaf: true,
                grad: RefCell::new(None),
                backward_done: Cell::new(false),
                parents: Vec::new(),
                backward_fn: None,
            }),
        }
    }

    /// A trainable leaf: gradients accumulate here during `backward`.
    pub fn leaf(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        assert_eq!(numel(&shape), data.len());
        Tensor {
            inner: Rc::new(Inner {
                shape,
                data,
                requires_grad: true,
                is_leaf: true,
                grad: RefCell::new(None),
                backward_done: Cell::new(false),
                parents: Vec::new(),
                backward_fn: None,
            }),
        }
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::from_vec(vec![], vec![value])
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let n = numel(&shape);
        Tensor::from_vec(shape, vec![0.0; n])
    }

    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        back: BackFn,
    ) -> Tensor {
        debug_assert_eq!(numel(&shape), data.len());
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        if !requires_grad {
            // Constant subgraph: no need to record anything.
            return Tensor::from_vec(shape, data);
        }
        Tensor {
            inner: Rc::new(Inner {
                shape,
                data,
                requires_grad: true,
                is_leaf: false,
                grad: RefCell::new(None),
                backward_done: Cell::new(false),
                parents,
                backward_fn: Some(back),
            }),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.inner.data
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn is_scalar(&self) -> bool {
        self.inner.data.len() == 1 && self.inner.shape.len() <= 1
    }

    /// Value of a scalar tensor.
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on non-scalar shape {:?}", self.shape());
        self.inner.data[0]
    }

    /// Gradient accumulated by the last `backward`, if any.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    fn ptr(&self) -> *const Inner {
        Rc::as_ptr(&self.inner)
    }

    /// Reverse-mode sweep from a scalar root. Populates `grad` on every
    /// `requires_grad` leaf reachable from the root. A second call on the
    /// same root is an error: rebuild the graph instead.
    pub fn backward(&self) -> Result<()> {
        if !self.is_scalar() {
            return Err(Error::NonScalarRoot(self.shape().to_vec()));
        }
        if self.inner.backward_done.get() {
            return Err(Error::BackwardTwice);
        }
        self.inner.backward_done.set(true);

        if !self.requires_grad() {
            return Ok(());
        }

        let order = self.topo_order();
        let mut grads: HashMap<*const Inner, Vec<f64>> = HashMap::new();
        grads.insert(self.ptr(), vec![1.0]);

        for node in order.iter().rev() {
            let Some(up) = grads.remove(&node.ptr()) else {
                continue;
            };
            if let Some(back) = &node.inner.backward_fn {
                let parent_grads = back(&up);
                debug_assert_eq!(parent_grads.len(), node.inner.parents.len());
                for (parent, pg) in node.inner.parents.iter().zip(parent_grads) {
                    if !parent.requires_grad() {
                        continue;
                    }
                    debug_assert_eq!(pg.len(), parent.numel());
                    match grads.entry(parent.ptr()) {
                        std::collections::hash_map::Entry::Occupied(mut e) => {
                            for (a, b) in e.get_mut().iter_mut().zip(&pg) {
                                *a += b;
                            }
                        }
                        std::collections::hash_map::Entry::Vacant(e) => {
                            e.insert(pg);
                        }
                    }
                }
            } else if node.inner.is_leaf && node.requires_grad() {
                let mut slot = node.inner.grad.borrow_mut();
                match slot.as_mut() {
                    Some(existing) => {
                        for (a, b) in existing.iter_mut().zip(&up) {
                            *a += b;
                        }
                    }
                    None => *slot = Some(up),
                }
            }
        }
        Ok(())
    }

    /// Topological order (parents before children) via iterative DFS.
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut visited: HashMap<*const Inner, bool> = HashMap::new();
        // (node, children_pushed)
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            match visited.get(&node.ptr()) {
                Some(_) => continue,
                None => {
                    visited.insert(node.ptr(), true);
                }
            }
            stack.push((node.clone(), true));
            for p in &node.inner.parents {
                if p.requires_grad() && !visited.contains_key(&p.ptr()) {
                    stack.push((p.clone(), false));
                }
            }
        }
        order
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .field("data", &self.inner.data)
            .finish()
    }
}

/// Maximum relative error between analytic gradients of `f` at `point` and
/// central finite differences with step `eps`. The denominator is
/// `max(1, |analytic|)` per coordinate.
pub fn grad_check<F>(f: F, point: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let shape = point.shape().to_vec();
    let base = point.data().to_vec();

    let leaf = Tensor::leaf(shape.clone(), base.clone());
    let out = f(&leaf)?;
    if !out.is_scalar() {
        return Err(Error::NonScalarRoot(out.shape().to_vec()));
    }
    out.backward()?;
    let analytic = leaf
        .grad()
        .unwrap_or_else(|| vec![0.0; base.len()]);

    let mut max_err = 0.0f64;
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += eps;
        let mut minus = base.clone();
        minus[i] -= eps;
        let fp = f(&Tensor::from_vec(shape.clone(), plus))?.item();
        let fm = f(&Tensor::from_vec(shape.clone(), minus))?.item();
        let numeric = (fp - fm) / (2.0 * eps);
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(1.0);
        if err > max_err {
            max_err = err;
        }
    }
    Ok(max_err)
}
