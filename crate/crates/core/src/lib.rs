//! Regularized robust scatter estimation.
//!
//! The estimator solves `Δ̂ = diag((1/n) x_iᵀ Q x_i)` with
//! `Q = ((1/n) X u(Δ̂) Xᵀ + γI)⁻¹` and returns `Ĉ = (1/n) X u(Δ̂) Xᵀ`.
//! The `deterministic` module predicts the spectrum and spike alignment of
//! `Ĉ` from population moments only.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod deterministic;
pub mod error;
pub mod estimator;
pub mod fixed_point;
mod linalg;
pub mod stable_metric;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use stable_metric::{stable_distance, DiagonalWeights, WeightFunction};
