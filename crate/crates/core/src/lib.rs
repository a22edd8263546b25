//! Linear-discriminant GAN training: generalized eigen-solvers, streaming LDA
//! statistics, eigenvalue objectives, a small MLP stack and the training loops that
//! tie them together.

// `!(x > 0.0)` also rejects NaN; index loops mirror the matrix algebra
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod lda;
pub mod linalg;
pub mod metrics;
pub mod net;
pub mod objectives;
pub mod rng;
pub mod selftest;
pub mod stream;
pub mod train;

pub use error::{LdganError, Result};
