//! Straggler-resilient coded matrix inversion for federated settings.
//!
//! Clients hold column blocks of a square matrix `A`. Blocks are shared
//! between clients under Lagrange-polynomial encryption, servers estimate
//! blocks of `A^{-1}` with iterative least squares, and a balanced
//! Reed-Solomon code lets the coordinator decode from any `k` of `n` workers.

// `!(x < y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod brs;
pub mod cmm;
pub mod error;
pub mod experiments;
pub mod field;
pub mod inverse;
pub mod io;
pub mod linalg;
pub mod lsq;
pub mod protocol;
pub mod sharing;
pub mod sim;
pub mod vandermonde;

pub use error::{Error, Result};
