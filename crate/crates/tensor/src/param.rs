use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::{numel, Gradients, Tensor};

/// Index of a parameter inside its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Owned, named parameter arrays of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T> Default for ParamStore<T> {
    fn default() -> Self {
        Self { params: Vec::new() }
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<T>) -> ParamId {
        assert_eq!(data.len(), numel(shape), "parameter data does not fill its shape");
        self.params.push(Param {
            name: name.into(),
            shape: shape.to_vec(),
            data,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub(crate) fn data_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.params[id.0].data
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// Replace all values, checking names and shapes against the current layout.
    pub fn load(&mut self, incoming: Vec<Param<T>>) -> Result<()> {
        if incoming.len() != self.params.len() {
            return Err(TensorError::Invalid {
                op: "ParamStore::load",
                msg: format!("expected {} parameters, got {}", self.params.len(), incoming.len()),
            });
        }
        for (have, new) in self.params.iter().zip(&incoming) {
            if have.name != new.name || have.shape != new.shape || new.data.len() != numel(&new.shape) {
                return Err(TensorError::Invalid {
                    op: "ParamStore::load",
                    msg: format!(
                        "parameter {} {:?} does not match {} {:?}",
                        new.name, new.shape, have.name, have.shape
                    ),
                });
            }
        }
        self.params = incoming;
        Ok(())
    }

    /// Leaf tensors for one forward/backward pass. Leaves of a non-trainable
    /// binding are constants: gradients still flow *through* the model into
    /// its inputs, never into the parameters.
    pub fn bind(&self, trainable: bool) -> Bound<T> {
        let leaves = self
            .params
            .iter()
            .map(|p| {
                if trainable {
                    Tensor::variable(p.data.clone(), &p.shape)
                } else {
                    Tensor::from_vec(p.data.clone(), &p.shape)
                }
                .expect("parameter data matches its shape")
            })
            .collect();
        Bound { leaves, trainable }
    }

    /// Hash of every parameter's name, shape and exact bit pattern.
    pub fn checksum(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for p in &self.params {
            p.name.hash(&mut h);
            p.shape.hash(&mut h);
            for v in &p.data {
                v.to_f64_lossy().to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}

/// Parameters of one model materialized as graph leaves.
#[derive(Debug, Clone)]
pub struct Bound<T: Real> {
    leaves: Vec<Tensor<T>>,
    trainable: bool,
}

impl<T: Real> Bound<T> {
    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.leaves[id.0]
    }

    pub fn leaves(&self) -> &[Tensor<T>] {
        &self.leaves
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    /// Gradient for every leaf (zeros where the sweep did not reach it).
    pub fn collect_grads(&self, grads: &Gradients<T>) -> Vec<Vec<T>> {
        self.leaves
            .iter()
            .map(|l| grads.get(l).map_or_else(|| vec![T::zero(); l.numel()], <[T]>::to_vec))
            .collect()
    }
}
