#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod active;
pub mod autodiff;
pub mod error;
pub mod np;
pub mod rng;
pub mod sim;
pub mod theory;

pub use error::{Error, Result};
