//! Reverse-mode automatic differentiation over dense CPU tensors.
//!
//! The engine covers exactly what small convolutional GAN and segmentation
//! models need: im2col convolutions, nearest upsampling, instance
//! normalization, pointwise activations, reductions and a fused softmax
//! cross entropy. Every op is generic over [`Real`] so that the same model
//! code can be checked against finite differences in `f64`.

mod conv;
mod error;
mod loss;
mod norm;
mod ops;
mod optim;
mod param;
mod real;
mod tensor;

pub use error::{Result, TensorError};
pub use optim::{Adam, AdamConfig};
pub use param::{Bound, Param, ParamId, ParamStore};
pub use real::Real;
pub use tensor::{Gradients, Tensor};
