//! Dense `f64` tensors with tape-based reverse-mode differentiation.
//!
//! A forward pass records every operation on a [`Tape`]; [`Tape::backward`]
//! then replays the recorded rules in reverse creation order. Parameters live
//! outside the tape as [`Tensor`]s and are copied in as leaves for each pass.

mod gemm;
pub mod gradcheck;
mod ops;
mod tape;
mod tensor;

pub use ops::BatchNormStats;
pub use tape::{Tape, Var};
pub use tensor::Tensor;

pub(crate) use ops::std_normal_cdf;
