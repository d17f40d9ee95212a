//! Dense matrices, a reverse-mode tape, trainable parameters and Adam.
//!
//! A [`Tape`] is built fresh for every forward pass. Parameters are copied in
//! from a [`ParamStore`] as leaves, operations append nodes, and
//! [`Tape::backward`] writes `∂loss/∂param` for every parameter in the store
//! (zero for parameters the loss does not reach).

mod adam;
mod gradcheck;
mod matrix;
mod params;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{compare_gradients, finite_difference_check, relative_error, GradCheckReport};
pub use matrix::Matrix;
pub use params::{Param, ParamStore};
pub use tape::{Activation, Tape, Tensor};
