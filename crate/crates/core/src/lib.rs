//! Kronecker-structured estimation of large correlation and covariance matrices.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design;
pub mod error;
pub mod estimate;
pub mod infer;
pub mod matcore;
pub mod portfolio;
pub mod select;
pub mod simlab;

pub use error::{Error, Result};
