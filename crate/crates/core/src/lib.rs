#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod citest;
pub mod data;
pub mod discovery;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod graph;
pub mod scm;

pub use data::Dataset;
pub use error::{Error, Result};
