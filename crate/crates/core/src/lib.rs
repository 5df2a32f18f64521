//! Robust mean estimation with a self-tuned robustification parameter.
//!
//! The estimator minimizes the penalized Pseudo-Huber objective
//!
//! ```text
//! L_n(mu, tau) = sum_i sqrt(tau^2 + (y_i - mu)^2) / (z sqrt(n)) - (sqrt(n)/z - z/sqrt(n)) tau
//! ```
//!
//! jointly over the location `mu` and the robustification parameter `tau`.
//! The objective is jointly convex, so the pair `(mu_hat, tau_hat)` is unique
//! whenever the sample has two distinct values.
//!
//! Modules:
//! - [`loss`]: the loss, its gradient and Hessian.
//! - [`solver`]: alternating gradient descent plus an exact coordinate solver.
//! - [`oracle`]: the population value `tau_star` for a known noise law.
//! - [`noise`]: standardized noise laws and seeded sampling.
//! - [`harness`]: baselines and Monte Carlo studies.
//! - [`cli`]: the command-line front end.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod harness;
pub mod loss;
pub mod noise;
pub mod oracle;
pub mod quadrature;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
pub use harness::{StudyResult, StudyRow, StudySpec};
pub use loss::{Hessian2x2, LossPoint, Sample};
pub use noise::{NoiseLaw, NoiseModel};
pub use oracle::OracleSolution;
pub use solver::{DiagnosticsReport, EstimatorConfig, FitResult, FitWarning, InitPolicy, Strategy};
