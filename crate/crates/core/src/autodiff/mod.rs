//! Reverse-mode automatic differentiation over dense float64 tensors.
//!
//! A [`Tape`] is rebuilt on every forward pass. Parameters live in a
//! [`ParamStore`] and enter the tape as leaves through [`Tape::param`];
//! [`Tape::backward`] returns their gradients and clears the tape, ready for
//! an [`AdamState::step`].

mod adam;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use params::{ParamId, ParamStore, PARAM_FORMAT_VERSION};
pub use tape::{sigmoid, softplus, Gradients, OpKind, Tape, Var};
pub use tensor::Tensor;
