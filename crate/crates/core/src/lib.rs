//! State estimation on the SE(3)-with-bias matrix Lie group.
//!
//! The crate implements the invariant Rauch-Tung-Striebel (IRTS) smoother and
//! its multiplicative counterpart (MRTS), the invariant/multiplicative
//! extended Kalman filters that drive their forward passes, invariant and
//! multiplicative Gauss-Newton batch MAP solvers, and a Monte-Carlo
//! simulation harness that benchmarks all four estimators on a synthetic
//! rigid-body trajectory with gyro and velocity-sensor biases.
//!
//! Module map:
//!
//! - [`so3`] — rotation-group primitives (Rodrigues, logarithm, left Jacobian)
//! - [`group`] — the 9x9 pose-plus-biases group: wedge/vee, exp/log, adjoint
//! - [`models`] — process and measurement models with both Jacobian families
//! - [`kalman`] — convention-agnostic covariance algebra (predict, gain, Joseph)
//! - [`estimators`] — IEKF/MEKF forward passes and the smoother backward passes
//! - [`batch`] — Gauss-Newton MAP solvers over a block-tridiagonal system
//! - [`sim`] — truth synthesis, sensor corruption, Monte-Carlo campaigns
//! - [`diagnostics`] — self-check battery exposed to the CLI `verify` command

pub mod batch;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod group;
pub mod kalman;
pub mod models;
pub mod sim;
pub mod so3;

pub use error::Error;
pub use group::{AlgebraElement, GroupElement, TangentVector};

/// Fixed 12x12 matrix used for covariances, adjoints and process Jacobians.
pub type Mat12 = nalgebra::SMatrix<f64, 12, 12>;
/// Fixed 12-vector of tangent coordinates.
pub type Vec12 = nalgebra::SVector<f64, 12>;
/// Dense 9x9 matrix holding a group or algebra embedding.
pub type Mat9 = nalgebra::SMatrix<f64, 9, 9>;
