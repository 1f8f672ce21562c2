//! Moment closures for passive scalars advected by rapidly fluctuating Gaussian flows.
//!
//! The crate provides the per-realization Monte Carlo oracle, deterministic solvers for
//! the closed mean equations (white noise and Ornstein–Uhlenbeck forcing), a matrix
//! check of the cluster expansion behind the closure, periodic homogenization, and
//! moments of geometric Brownian motion integrals for the random strain flow.

pub mod closure;
pub mod feynman_kac;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod gbm;
pub mod homogenize;
pub mod ic;
pub mod linalg;
pub mod noise;
pub mod propagator;
pub mod quadrature;
pub mod special;
mod spectral;
pub mod stats;

pub use error::{Error, Result};
