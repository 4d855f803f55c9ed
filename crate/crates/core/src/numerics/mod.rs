//! Dense kernels and training substrate shared by every model: matrices,
//! activations, losses, Xavier init, Adam and a finite-difference checker.

mod adam;
mod gradcheck;
mod linear;
mod matrix;
mod ops;
mod params;
mod rng;

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use gradcheck::{grad_check, GRAD_CHECK_STEP};
pub use linear::Linear;
pub use matrix::{axpy, dot, gemv_acc, gemv_t_acc, outer_acc, Matrix};
pub use ops::{
    activation, mae, mse, sigmoid, softmax, softmax_backward, softmax_in_place, Activation,
};
pub use params::{init_uniform, prefixed, prefixed_mut, xavier_bound, Parameterized};
pub(crate) use params::xavier_uniform;
pub use rng::RngStream;
