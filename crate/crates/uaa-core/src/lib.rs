//! Adaptive accelerated high-order regularized methods for composite convex
//! optimization, with the subproblem solvers, auxiliary acceleration model,
//! benchmark objectives and baselines they are measured against.
//!
//! The driver minimizes `F = f + r` (`f` smooth convex, `r` convex with a
//! cheap proximal mapping) without knowing any Lipschitz constants: a simple
//! adaptive phase secures one successful regularized step, then an
//! accelerated phase drives the iterates through an auxiliary model while
//! the regularization weights adapt.
//!
//! ```
//! use std::sync::Arc;
//! use nalgebra::{DMatrix, DVector};
//! use uaa_core::driver::{uaa, RunStatus, UaaConfig};
//! use uaa_core::model::ModelVariant;
//! use uaa_core::problem::{CompositeProblem, QuadraticOracle};
//!
//! let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
//! let b = DVector::from_vec(vec![-1.0, 2.0]);
//! let oracle = QuadraticOracle::new(q, b, 0.0)?;
//! let problem = CompositeProblem::smooth(Arc::new(oracle));
//!
//! let mut config = UaaConfig::for_order(2, ModelVariant::ExactHessian);
//! config.stopping.grad_map_tol = 1e-8;
//! let solution = uaa(&problem, &DVector::from_vec(vec![5.0, -3.0]), &config)?;
//! assert_eq!(solution.status, RunStatus::Converged);
//! // minimizer of x^T Q x / 2 + b^T x is (1, -0.5)
//! assert!((solution.x[0] - 1.0).abs() < 1e-4 && (solution.x[1] + 0.5).abs() < 1e-4);
//! # Ok::<(), uaa_core::Error>(())
//! ```

pub mod auxiliary;
pub mod driver;
pub mod error;
pub mod model;
pub mod problem;
pub mod subsolver;

pub use error::{Error, Result};
