//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every operation applied to its [`Var`]s. Calling
//! [`Tape::backward`] walks the record in reverse and returns gradients for
//! every leaf created with [`Tape::leaf`]. Constants never receive gradients,
//! which is how frozen weights and detached inputs are expressed.

mod conv;
mod elementwise;
mod loss;
mod norm;
mod pool;

use std::cell::RefCell;
use std::rc::Rc;

pub use conv::reflect_index;
pub use norm::{BatchStats, NormMode};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Maps the upstream gradient to one optional gradient per parent.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&Tensor<T>) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    value: Rc<Tensor<T>>,
    requires_grad: bool,
    is_leaf: bool,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
}

pub struct Tape<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
    grad_enabled: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            grad_enabled: true,
        }
    }

    /// A tape that never records backward closures. Leaves still exist but
    /// nothing downstream of them is differentiable.
    pub fn no_grad() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            grad_enabled: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.insert(Rc::new(value), false, true, Vec::new(), None)
    }

    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        let rg = self.grad_enabled;
        self.insert(Rc::new(value), rg, true, Vec::new(), None)
    }

    fn insert(
        &self,
        value: Rc<Tensor<T>>,
        requires_grad: bool,
        is_leaf: bool,
        parents: Vec<usize>,
        backward: Option<BackwardFn<T>>,
    ) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value,
            requires_grad,
            is_leaf,
            parents,
            backward,
        });
        Var { tape: self, id }
    }

    /// Records an operation result. `backward` is only invoked (and its
    /// captured state kept) when some parent requires a gradient.
    pub(crate) fn push<F>(&self, value: Tensor<T>, parents: &[Var<'_, T>], backward: F) -> Var<'_, T>
    where
        F: FnOnce() -> BackwardFn<T>,
    {
        let requires_grad = self.grad_enabled && parents.iter().any(|p| p.requires_grad());
        let (ids, bw) = if requires_grad {
            (parents.iter().map(|p| p.id).collect(), Some(backward()))
        } else {
            (Vec::new(), None)
        };
        self.insert(Rc::new(value), requires_grad, false, ids, bw)
    }

    /// Gradients of the (scalar) `root` with respect to every leaf.
    pub fn backward(&self, root: Var<'_, T>) -> Grads<T> {
        let nodes = self.nodes.borrow();
        let mut pending: Vec<Option<Tensor<T>>> = (0..=root.id).map(|_| None).collect();
        let mut leaves: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        pending[root.id] = Some(Tensor::ones(nodes[root.id].value.shape()));
        for id in (0..=root.id).rev() {
            let Some(grad) = pending[id].take() else {
                continue;
            };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            if node.is_leaf {
                leaves[id] = Some(grad);
                continue;
            }
            let Some(bw) = node.backward.as_ref() else {
                continue;
            };
            let parent_grads = bw(&grad);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (&pid, pg) in node.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !nodes[pid].requires_grad {
                    continue;
                }
                debug_assert_eq!(pg.shape(), nodes[pid].value.shape(), "gradient shape");
                match &mut pending[pid] {
                    Some(acc) => acc.add_assign(&pg),
                    slot => *slot = Some(pg),
                }
            }
        }
        Grads { grads: leaves }
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Scalar> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        Rc::clone(&self.tape.nodes.borrow()[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Var<'t, T> {
        let v = self.value();
        self.tape.insert(v, false, true, Vec::new(), None)
    }
}

impl<T: Scalar> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

pub struct Grads<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Grads<T> {
    pub fn get(&self, v: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var<'_, T>) -> Option<Tensor<T>> {
        self.grads.get_mut(v.id).and_then(|g| g.take())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_flows_to_leaves_only() {
        let tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap());
        let c = tape.constant(Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap());
        let loss = a.mul(c).add(a).sum();
        assert_eq!(loss.value().item(), 1.0 * 3.0 + 2.0 * 4.0 + 3.0);
        let g = tape.backward(loss);
        assert_eq!(g.get(a).unwrap().data(), &[4.0, 5.0]);
        assert!(g.get(c).is_none());
    }

    #[test]
    fn no_grad_tape_records_nothing_differentiable() {
        let tape = Tape::<f32>::no_grad();
        let a = tape.leaf(Tensor::ones(&[3]));
        let s = a.relu().sum();
        assert!(!s.requires_grad());
        let g = tape.backward(s);
        assert!(g.get(a).is_none());
    }

    #[test]
    fn detach_blocks_gradient() {
        let tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::full(&[1], 2.0));
        let d = a.detach();
        let loss = a.mul(d).sum();
        let g = tape.backward(loss);
        assert_eq!(g.get(a).unwrap().data(), &[2.0]);
    }
}
