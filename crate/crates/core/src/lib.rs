//! Nonlinear unmixing of dynamic PET images with a parametric
//! compartment-model-based mixing model.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod depict;
pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod model;
pub mod par;
pub mod phantom;
pub mod solver;

pub use error::{Error, Result};
