//! Numerical laboratory for zero-entropy binary dynamical sources.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod blocksys;
pub mod branches;
pub mod config;
pub mod error;
pub mod law;
pub mod quad;
pub mod source;
pub mod special;
pub mod weights;
pub mod wtd;

pub use error::{Error, Result};
