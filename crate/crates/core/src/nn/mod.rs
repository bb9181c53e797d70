//! Minimal tensor engine: forward ops, reverse-mode gradients and Adam.

mod adam;
mod graph;
pub mod kernels;
pub mod ops;
mod scalar;
mod tensor;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use graph::{Graph, Var};
pub use ops::{
    batchnorm1d_forward, conv1d_forward, dense_forward, dropout_forward, maxpool1d_forward, relu,
    softmax, softmax_cross_entropy, BatchNormState,
};
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Whether batch normalization and dropout run in training or inference form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
