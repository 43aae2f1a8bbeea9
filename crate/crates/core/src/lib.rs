#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

//! Robust diffusive stability (RDS) analysis for pairs of nonnegative
//! discrete-time systems coupled through a nonnegative matrix `D`.

pub mod certificates;
pub mod error;
pub mod leslie;
pub mod lpsolve;
pub mod matcore;
pub mod matrix;
pub mod rds;

pub use error::{Error, Result};
pub use matrix::{Matrix, NonnegMatrix, PositiveVector};
