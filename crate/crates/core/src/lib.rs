// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod fixtures;
pub mod gradcam;
pub mod harness;
pub mod imaging;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};
