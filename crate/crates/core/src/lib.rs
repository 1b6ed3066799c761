// Negated float comparisons such as `!(x > 0.0)` are deliberate: they also
// reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cgan;
pub mod error;
pub mod eval;
pub mod grid;
pub mod optflow;
pub mod preprocess;
pub mod synth;

pub use error::{Error, Result};
