//! Dense 2-D tensors with tape-based reverse-mode differentiation.
//!
//! Values are recorded on a [`Tape`] as the forward pass runs; a call to
//! [`Tape::backward`] replays the record in reverse and leaves an adjoint on
//! every node that (transitively) depends on a `requires_grad` leaf.
//! Model parameters live in a [`ParamStore`] and are bound onto a fresh tape
//! for every step.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, finite_diff_check_sampled, relative_error, DEFAULT_FD_EPS};
pub use params::{Bound, ParamId, ParamStore};
pub use tape::{sigmoid, Elementwise, Reduce, SruInputs, Tape, Var, DEFAULT_LEAKY_SLOPE, DEGREE_FLOOR};
pub use tensor::Tensor;
