#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod banded;
pub mod cli;
pub mod counterexample;
pub mod error;
pub mod grid;
pub mod invertibility;
pub mod norms;
pub mod operator;
pub mod profile;
pub mod sweep;

pub use error::{Error, Result};
