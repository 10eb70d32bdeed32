//! Dense `f64` tensors with a dynamic reverse-mode tape.
//!
//! Every op returns a new immutable [`Tensor`]; ops whose inputs participate
//! in the tape record a backward rule. [`Tensor::backward`] walks the recorded
//! graph once in reverse topological order and accumulates into leaf
//! gradients. Producing a non-finite value is an error rather than a silent NaN.

mod autograd;
mod error;
pub mod functional;
pub mod gradcheck;
pub mod ops;
mod optim;
pub mod shape;
mod tensor;

pub use autograd::Tape;
pub use error::{Result, TensorError};
pub use ops::elementwise::{BinaryKind, UnaryKind};
pub use ops::layout::concat;
pub use ops::reduce::ReduceKind;
pub use optim::{Adam, AdamConfig};
pub use tensor::Tensor;
