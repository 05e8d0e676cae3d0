//! Sliding-window rebar detection on GPR B-scans with a from-scratch CNN engine.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod detect;
pub mod error;
pub mod gpr;
pub mod gradcheck;
pub mod net;
pub mod ops;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod window;

pub use error::{Error, ErrorFamily, Result};
pub use tensor::Tensor;
