//! The five actors: two generators, two discriminators and the downstream
//! task network, plus their on-disk checkpoints.
//!
//! Every model owns a [`ParamStore`]; a forward pass takes a [`Bound`] view
//! of those parameters so that one binding can be shared by several forward
//! calls within a training step. Binding with `trainable = false` makes the
//! parameters graph constants, which is how a frozen expert passes gradients
//! to its input without ever receiving any itself.

mod archive;
mod checkpoint;
mod discriminator;
mod generator;
mod task;

pub use archive::{NamedTensor, TensorArchive, ARCHIVE_MAGIC, ARCHIVE_VERSION};
pub use checkpoint::{Checkpoint, CheckpointMeta, ModelArch};
pub use discriminator::{Discriminator, DiscriminatorArch};
pub use generator::{Direction, Generator, GeneratorArch, GeneratorBody, ResnetSpec};
pub use task::{Head, Normalization, TaskArch, TaskNetwork};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tada_tensor::{Bound, ParamId, ParamStore, Real, Tensor};

use crate::error::Result;

pub(crate) const NORM_EPS: f64 = 1e-5;
pub(crate) const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy)]
pub(crate) enum Init {
    /// Zero-mean normal with the given standard deviation.
    Normal(f64),
    /// He initialization for ReLU stacks.
    Kaiming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvLayer {
    weight: ParamId,
    bias: Option<ParamId>,
    stride: usize,
    pad: usize,
}

pub(crate) struct LayerBuilder<'a, T: Real> {
    pub store: &'a mut ParamStore<T>,
    pub rng: ChaCha8Rng,
}

impl<'a, T: Real> LayerBuilder<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, seed: u64) -> Self {
        Self {
            store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        &mut self,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        init: Init,
    ) -> ConvLayer {
        let fan_in = (cin * kernel * kernel) as f64;
        let std = match init {
            Init::Normal(s) => s,
            Init::Kaiming => (2.0 / fan_in).sqrt(),
        };
        let normal = Normal::new(0.0, std).expect("finite std");
        let n = cout * cin * kernel * kernel;
        // Sampled in f64 so that f32 and f64 models built from one seed agree.
        let w = (0..n)
            .map(|_| T::from_f64_lossy(normal.sample(&mut self.rng)))
            .collect();
        let weight = self
            .store
            .push(format!("{name}.weight"), &[cout, cin, kernel, kernel], w);
        let bias = bias.then(|| self.store.push(format!("{name}.bias"), &[cout], vec![T::zero(); cout]));
        ConvLayer {
            weight,
            bias,
            stride,
            pad,
        }
    }
}

impl ConvLayer {
    pub fn forward<T: Real>(&self, p: &Bound<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.conv2d(p.get(self.weight), self.bias.map(|b| p.get(b)), self.stride, self.pad)?)
    }
}

pub(crate) fn norm<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(x.instance_norm(T::from_f64_lossy(NORM_EPS))?)
}

pub(crate) fn leaky<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.leaky_relu(T::from_f64_lossy(LEAKY_SLOPE))
}
