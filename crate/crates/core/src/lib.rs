// Negated comparisons are used deliberately so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod evaluate;
pub mod harness;
pub mod numerics;
pub mod precoders;
pub mod quantize;
pub mod statistics;

pub use error::{Error, Result};
