//! Exact large-deviation asymptotics for a multivariate random walk hitting a
//! remote translated orthant, plus the importance-sampling machinery used to
//! check them.
//!
//! For a random walk `S(n) = ξ(1) + … + ξ(n)` in ℝᵈ with light-tailed i.i.d.
//! jumps and a vertex `g > 0`, the crate computes
//!
//! ```text
//! P(η(sG) < ∞) ≈ A · s^{-(d-1)/2} · exp(-s·D(G)),   G = g + cl(Q⁺)
//! ```
//!
//! where `D` is the second rate function and `A` is assembled from Laplace
//! quantities and a Monte Carlo estimated integral.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches files,
//! threads or the command line lives in the `ldhit` crate.

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod asymptotics;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod jump;
pub mod linalg;
pub mod quadrature;
pub mod rate;
pub mod simulation;
pub mod stats;

pub use error::{Error, Result};
pub use geometry::{C3Flags, C3Status, HalfSpaceGeom, MppReport, OrthantTarget};
pub use jump::{
    ClaimModel, GaussianJumpModel, JumpModel, ScalarDist, SparreAndersenModel, StepSampler,
};
pub use rate::{RateEvaluator, SecondRateResult};
pub use simulation::{McRun, TiltSource, TiltSpec};

/// Column vector used throughout the public API.
pub type Vector = nalgebra::DVector<f64>;
/// Dense square matrix used throughout the public API.
pub type Matrix = nalgebra::DMatrix<f64>;
