// `!(x > 0.0)` style checks deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod chain;
pub mod cli;
pub mod curve;
pub mod error;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod relax;
pub mod sim;

pub use error::{Error, Result};
