//! Cutting-plane optimization toolkit.
//!
//! The crate implements a volumetric-center cutting-plane method driven by
//! incrementally maintained leverage scores, and the layers underneath it:
//!
//! - [`mat`], [`ops`]: dense kernels, weighted projections, leverage scores,
//!   Woodbury updates, preconditioned inverse application;
//! - [`quad`], [`sketch`], [`rng`]: Gauss-Legendre rules and seeded Gaussian
//!   sketching;
//! - [`pm`]: projection maintenance with a multiplicative weight sandwich;
//! - [`batch`], [`estimator`], [`layered`]: batched low-rank leverage deltas
//!   and the three-layer estimate maintainer;
//! - [`cutting_plane`], [`convex`], [`saddle`]: the feasibility driver,
//!   convex minimization, and convex-concave games with gap certificates;
//! - [`market`]: linear exchange and Fisher market equilibria;
//! - [`harness`]: instance files, traces and the `cutplane` CLI commands.
//!
//! Start with the runnable examples (`cargo run --example feasibility_ball`,
//! `market_equilibrium`, `saddle_game`, ...) for end-to-end usage.

pub mod action;
pub mod batch;
pub mod convex;
pub mod cutting_plane;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod layered;
pub mod market;
pub mod mat;
pub mod ops;
pub mod pm;
pub mod quad;
pub mod rng;
pub mod saddle;
pub mod simplex;
pub mod sketch;

pub use error::{Error, Result};
