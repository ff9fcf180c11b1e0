//! First Steklov eigenvalue of the p-Laplacian with a boundary potential on
//! planar domains, optimization of the potential under a mass constraint, and
//! the boundary shape derivative of the eigenvalue.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod eigensolver;
pub mod error;
pub mod mesh;
pub mod rearrange;
pub mod shapederiv;
pub mod sparse;

pub use error::{Error, Result};
