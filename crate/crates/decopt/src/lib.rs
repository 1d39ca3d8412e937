//! Decentralized convex optimization under coupled, local and shared-variable
//! affine constraints.
//!
//! The crate is organised bottom-up:
//!
//! - [`operators`]: matrix-free linear operators, block composition, gossip lifting,
//!   dense spectral analysis and oracle counters.
//! - [`network`]: gossip matrices, including a weighted path with prescribed condition number.
//! - [`conditioning`]: mixed and projected condition numbers, block scalings, Chebyshev preconditioning.
//! - [`problems`]: objective oracles and the builders that bring each constraint family to `B u = b`.
//! - [`solvers`]: APAPC, regularized APAPC and (restarted) gradient sliding.
//! - [`worstcase`]: truncated lower-bound instances.
//! - [`io`] and [`experiment`]: instance files, configs, sweeps and slope fits behind the CLI.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::single_range_in_vec_init)]

pub mod conditioning;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod network;
pub mod operators;
pub mod problems;
pub mod solvers;
pub mod worstcase;

pub use error::{Error, Result};
