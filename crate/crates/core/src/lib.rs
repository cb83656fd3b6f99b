// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod basin;
pub mod config;
pub mod constants;
pub mod crystal;
pub mod error;
pub mod minimize;
pub mod modes;
pub mod odf;
mod par;
pub mod plot;
pub mod potential;
pub mod thermal;
pub mod trap;

pub use error::{Error, Result};
