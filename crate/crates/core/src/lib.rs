// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod embeddings;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod plda;
pub mod regularize;
pub mod scoring;

pub use error::{Error, Result};
