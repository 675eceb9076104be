// `!(x >= 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod matkernel;
pub mod model;
pub mod multichannel;
pub mod theory;
pub mod waterfill;

pub mod channel_rng;
pub mod mimo;
pub mod miso;

mod ellipsoid;

pub use error::{Error, Result};
