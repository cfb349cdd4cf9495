//! Dense matrices, a reverse-mode gradient tape and finite-difference checking.

pub mod gradcheck;
pub mod matrix;
pub mod params;
pub mod tape;

pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport};
pub use matrix::{dot, sigmoid, softplus, Matrix, Real};
pub use params::{ParamId, ParamSet};
pub use tape::{Gradients, Tape, Var, LOG_CLAMP, MASK_VALUE};
