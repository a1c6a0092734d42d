#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bounds;
pub mod cli;
pub mod counterexample;
pub mod error;
pub mod info;
pub mod learning;
pub mod matrix;
pub mod rd;
pub mod report;
pub mod rng;
pub mod trajectory;
pub mod validation;

pub use error::{Error, Result};
