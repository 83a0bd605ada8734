//! Least product relative error (LPRE) estimation for multiplicative
//! regression models `y = exp(x'β)·ε`.
//!
//! The crate is `no_std` and only needs `alloc`. It contains the criterion
//! functions (LPRE, LARE, least squares and least absolute deviation on the
//! log scale, and the general relative-error family), their solvers, plug-in
//! and random-weighting inference, the error laws used to study the
//! estimators, and median prediction-error metrics.
//!
//! ```
//! use lpre_core::{fit_lpre, Dataset, SolverOptions};
//! use nalgebra::{DMatrix, DVector};
//!
//! let x = DMatrix::from_row_slice(3, 2, &[1.0, -1.0, 1.0, 0.0, 1.0, 1.0]);
//! let y = DVector::from_iterator(3, [-1.0f64, 0.5, 2.0].iter().map(|t| t.exp()));
//! let data = Dataset::new(x, y).unwrap();
//! let fit = fit_lpre(&data, &SolverOptions::default()).unwrap();
//! assert!(fit.converged);
//! ```

#![no_std]

extern crate alloc;

pub mod distributions;
mod error;
pub mod inference;
mod linalg;
pub mod model;
pub mod predict;
pub mod quadrature;
pub mod rng;
pub mod solver;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use linalg::{check_design, DesignReport};
pub use model::{Coefficients, Criterion, Dataset, GreCriterion};
pub use solver::{
    fit, fit_constrained, fit_constrained_lpre, fit_gre, fit_lad_log, fit_lare, fit_lpre,
    fit_ls_log, FitResult, LinearHypothesis, SolverOptions,
};
