//! Joint 3D localization and MIMO channel estimation for near-field XL-MIMO
//! receivers with sub-connected planar arrays.

// negated comparisons are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod channel;
pub mod dictionary;
pub mod doa;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod localization;
pub mod pipeline;
pub mod seeding;
pub mod sensing;
pub mod solvers;

pub use error::{Error, Result};
