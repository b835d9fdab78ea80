//! Elimination of unconstrained variables from quadratic-cost perception
//! problems (pose graphs, range-aided SLAM, sensor-network localization,
//! SfM-shaped problems) through a matrix-free Schur complement operator, and
//! Riemannian trust-region solvers for the reduced and full problems.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64` for the common case.

// `!(x > 0.0)` is used deliberately so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod dense;
mod error;
pub mod io;
pub mod manifold;
pub mod model;
mod scalar;
pub mod schur;
pub mod solver;
pub mod sparse;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Dataset = io::Dataset<f64>;
pub type Measurement = model::Measurement<f64>;
pub type QuadraticModel = model::QuadraticModel<f64>;
pub type SchurOperator = schur::SchurOperator<f64>;
pub type Problem = solver::Problem<f64>;
pub type SolverReport = solver::SolverReport<f64>;
pub type CscMatrix = sparse::CscMatrix<f64>;

pub type DatasetF32 = io::Dataset<f32>;
pub type QuadraticModelF32 = model::QuadraticModel<f32>;
pub type SchurOperatorF32 = schur::SchurOperator<f32>;
pub type ProblemF32 = solver::Problem<f32>;
