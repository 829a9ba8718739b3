//! Sparse positive-definite estimation of the within- and between-subject
//! covariance matrices of multivariate repeated measurements.
//!
//! The pipeline is: build a [`RepeatedData`], form a sample estimate with
//! one of the [`SampleKind`] estimators, pick λ by subject-level
//! cross-validation ([`kfold_cv`]) or a closed-form rate, then [`solve`]
//! the ℓ1-penalized problem under an eigenvalue floor.

pub mod error;
pub mod exec;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod simulate;
pub mod solver;
pub mod tuning;

pub use error::{Error, Result};
pub use exec::Execution;
pub use matrix::{Eigen, SymMatrix};
pub use model::{
    aggregated_sample, anova_sample, between_sample, design_summary, to_correlation, within_sample, DesignSummary,
    RepeatedData, SampleDiagnostics, SampleKind, SubjectBlock,
};
pub use solver::{kkt_residual, objective, solve, solve_scored, solve_warm, AdmmResult, AdmmSettings, WarmStart, ZERO_TOL};
pub use tuning::{
    fold_assignment, kfold_cv, lambda_grid, CvConfig, CvResult, EstimatorKind, Scale, SelectionRule, TheoryConstants,
};
