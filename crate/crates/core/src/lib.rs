//! Two-penalty Lasso and adaptive Lasso for fixed-effects panel data.
//!
//! The model is `y_{i,t} = x_{i,t}' beta + c_i + eps_{i,t}` with possibly
//! many more covariates than observations. Estimation penalizes the
//! covariate coefficients and the individual effects at separate levels,
//!
//! ```text
//! min  ||y - X beta - D c||^2 + 2 lambda ||beta||_1 + 2 mu ||c||_1,
//! ```
//!
//! and a `sqrt(n)` rescaling of the dummy block reduces the two-penalty
//! search to a single tuning parameter chosen by BIC. The crate bundles:
//!
//! - [`panel`]: the balanced-panel data model and design-matrix views;
//! - [`solver`]: a generic weighted-Lasso coordinate descent engine with
//!   KKT certificates and regularization paths;
//! - [`estimators`]: the panel Lasso, its single-penalty reduction, BIC
//!   selection, the adaptive second stage and least-squares benchmarks;
//! - [`theory`]: finite-sample diagnostics (penalty levels, oracle error
//!   bounds, restricted eigenvalues, sign-recovery conditions);
//! - [`sim`]: data-generating processes, experiment presets A-I, metrics
//!   and a reproducible replication engine.

pub mod error;
pub mod estimators;
pub mod panel;
pub mod sim;
pub mod solver;
pub mod theory;

pub use error::{Error, Result};
