//! Sparse high-dimensional regression with nonconvex penalties.
//!
//! The central estimator is the calibrated concave-convex procedure (CCCP):
//! a Lasso fit at a reduced level `tau * lambda` followed by a single
//! majorize-minimize step for the SCAD or MCP penalized least squares
//! objective. Tuning along a solution path uses a high-dimensional BIC.
//!
//! Module map:
//!
//! * [`data`]: datasets, standardization, oracle least squares, selection metrics
//! * [`penalty`]: SCAD / MCP / L1 penalties and their convex-concave split
//! * [`solver`]: coordinate descent for the convex surrogate and the CCCP drivers
//! * [`selection`]: HBIC and k-fold cross-validation
//! * [`baselines`]: hard-thresholded Lasso with least squares refit
//! * [`logistic`]: penalized logistic regression via CCCP + IRLS
//! * [`diagnostics`]: KKT residuals, sparse eigenvalues, local-minimum L2 bound
//! * [`sim`]: Monte Carlo designs, drivers and report aggregation

pub mod baselines;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod logistic;
pub mod penalty;
pub mod selection;
pub mod sim;
pub mod solver;

mod linalg;

pub use data::{oracle_fit, selection_metrics, standardize, Dataset, Design, Metrics, TrueModel};
pub use error::{Error, Result};
pub use penalty::{soft_threshold, PenaltyFamily, PenaltySpec};
pub use solver::{
    calibrated_cccp, cccp_full, lambda_grid, lasso, path, solve_surrogate, FitResult,
    SolutionPath, SolverConfig, SurrogateProblem, TauRule,
};
