#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod benchmarks;
pub mod config;
pub mod error;
pub mod functions;
pub mod gp;
pub mod graph;
pub mod harness;
pub mod metrics;
pub mod optimizer;
pub mod problem;

pub use error::{Error, Result};
