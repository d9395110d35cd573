//! Dense reverse-mode differentiation: tensors, a recording tape, parameters,
//! Adam, and a finite-difference checker.

mod adam;
pub mod gradcheck;
mod param;
mod tape;
mod tensor;

pub use adam::Adam;
pub use param::{ParamId, ParamStore, Parameter};
pub use tape::{BatchNormState, BatchStats, BinaryKind, Gradients, Tape, Var};
pub use tensor::Tensor;
