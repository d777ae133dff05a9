#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod decoder;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod inference;
pub mod io;
pub mod pointcloud;
pub mod predictor;
pub mod scenegen;
pub mod seed;

pub use error::{Error, Result};
