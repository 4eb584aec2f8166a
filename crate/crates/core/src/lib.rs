//! Simulation and verification toolkit for disordered mean-field
//! interacting diffusions.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod disorder;
pub mod empirical;
pub mod error;
pub mod experiment;
pub mod mkv;
pub mod model;
pub mod quad;
pub mod rate;
pub mod rng;
pub mod sanov;
pub mod simulate;

pub use error::{Error, Result};
