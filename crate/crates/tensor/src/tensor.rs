use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Result, TensorError};
use crate::real::Real;

static NEXT_ID: AtomicUsize = AtomicUsize::new(1);

/// Maps the gradient flowing into an op's output onto gradients for each of
/// its parents (`None` when a parent needs no gradient).
pub(crate) type BackwardFn<T> = Box<dyn Fn(&[T], &[Tensor<T>]) -> Vec<Option<Vec<T>>>>;

struct Node<T: Real> {
    id: usize,
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    parents: Vec<Tensor<T>>,
    backward: Option<BackwardFn<T>>,
}

/// Immutable dense row-major tensor that records the operations producing it.
///
/// Cloning is cheap (reference counted). A tensor keeps its whole producing
/// graph alive only when some leaf in that graph requires a gradient.
pub struct Tensor<T: Real>(Rc<Node<T>>);

impl<T: Real> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<T: Real> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.0.id)
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Real> Tensor<T> {
    fn build(
        data: Vec<T>,
        shape: Vec<usize>,
        requires_grad: bool,
        parents: Vec<Tensor<T>>,
        backward: Option<BackwardFn<T>>,
    ) -> Self {
        debug_assert_eq!(data.len(), numel(&shape));
        Tensor(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            parents,
            backward,
        }))
    }

    /// Constant tensor; gradients never flow into it.
    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        if data.len() != numel(shape) {
            return Err(TensorError::DataLength {
                shape: shape.to_vec(),
                len: data.len(),
            });
        }
        Ok(Self::build(data, shape.to_vec(), false, Vec::new(), None))
    }

    /// Leaf tensor whose gradient is reported by [`Tensor::backward`].
    pub fn variable(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        if data.len() != numel(shape) {
            return Err(TensorError::DataLength {
                shape: shape.to_vec(),
                len: data.len(),
            });
        }
        Ok(Self::build(data, shape.to_vec(), true, Vec::new(), None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::build(vec![T::zero(); numel(shape)], shape.to_vec(), false, Vec::new(), None)
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::build(vec![value; numel(shape)], shape.to_vec(), false, Vec::new(), None)
    }

    pub fn scalar(value: T) -> Self {
        Self::build(vec![value], Vec::new(), false, Vec::new(), None)
    }

    /// Result of an op. The graph edge is only recorded when a parent
    /// requires a gradient.
    pub(crate) fn from_op(data: Vec<T>, shape: Vec<usize>, parents: Vec<Tensor<T>>, backward: BackwardFn<T>) -> Self {
        if parents.iter().any(Tensor::requires_grad) {
            Self::build(data, shape, true, parents, Some(backward))
        } else {
            Self::build(data, shape, false, Vec::new(), None)
        }
    }

    pub fn id(&self) -> usize {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.data.clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar(self.shape().to_vec()));
        }
        Ok(self.0.data[0])
    }

    /// Dimensions of a rank-4 tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match *self.shape() {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(TensorError::Rank {
                op: "dims4",
                expected: 4,
                shape: self.shape().to_vec(),
            }),
        }
    }

    /// Same values cut off from the graph.
    pub fn detach(&self) -> Self {
        Self::build(self.to_vec(), self.shape().to_vec(), false, Vec::new(), None)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Self::from_op(
            self.to_vec(),
            shape.to_vec(),
            vec![self.clone()],
            Box::new(|g, _| vec![Some(g.to_vec())]),
        ))
    }

    /// Reverse-mode sweep seeded with ones at `self`.
    pub fn backward(&self) -> Gradients<T> {
        let mut grads: HashMap<usize, Vec<T>> = HashMap::new();
        if !self.requires_grad() {
            return Gradients { grads };
        }
        grads.insert(self.id(), vec![T::one(); self.numel()]);
        for node in self.topological_order().iter().rev() {
            let Some(backward) = node.0.backward.as_ref() else {
                continue;
            };
            let Some(g) = grads.remove(&node.id()) else {
                continue;
            };
            let parent_grads = backward(&g, &node.0.parents);
            grads.insert(node.id(), g);
            for (parent, pg) in node.0.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !parent.requires_grad() {
                    continue;
                }
                debug_assert_eq!(pg.len(), parent.numel());
                match grads.get_mut(&parent.id()) {
                    Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a = *a + *b),
                    None => {
                        grads.insert(parent.id(), pg);
                    }
                }
            }
        }
        Gradients { grads }
    }

    fn topological_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        let mut stack = vec![(self.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            if !visited.insert(node.id()) {
                continue;
            }
            stack.push((node.clone(), true));
            for p in node.0.parents.iter().filter(|p| p.requires_grad()) {
                if !visited.contains(&p.id()) {
                    stack.push((p.clone(), false));
                }
            }
        }
        order
    }
}

/// Gradients produced by one backward sweep, keyed by tensor identity.
#[derive(Debug, Default)]
pub struct Gradients<T> {
    grads: HashMap<usize, Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, t: &Tensor<T>) -> Option<&[T]> {
        self.grads.get(&t.id()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}
