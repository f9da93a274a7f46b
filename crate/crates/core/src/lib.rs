//! Numerical laboratory for mollification gaps `int f(u) - f(u * phi_eps)`:
//! kernel moments, grid convolution, decay-rate ladders and a constrained
//! bilayer energy model.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bilayer;
pub mod cli;
pub mod error;
pub mod field;
pub mod gap;
pub mod kernel;
pub mod quad;

pub use error::{Error, Result};
pub use field::{convolve, GridFunction, TestFunctionSpec};
pub use gap::{decay_ladder, gap, limit_functional, quadratic_gap_oracle, DecayFit, Integrand, Verdict};
pub use kernel::{make_kernel, Kernel, MomentReport, Shape};
