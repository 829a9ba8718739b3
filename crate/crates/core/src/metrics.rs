//! Error norms, positive-definiteness checks, support recovery and ROC sweeps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SymMatrix;
use crate::solver::{solve_scored, AdmmSettings, ZERO_TOL};

fn same_dim(a: &SymMatrix, b: &SymMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: b.dim(),
            actual: a.dim(),
        });
    }
    Ok(())
}

pub fn frobenius_error(est: &SymMatrix, truth: &SymMatrix) -> Result<f64> {
    same_dim(est, truth)?;
    Ok((est - truth).frobenius_norm())
}

/// Largest singular value of `est − truth`, i.e. its largest absolute eigenvalue.
pub fn spectral_error(est: &SymMatrix, truth: &SymMatrix) -> Result<f64> {
    same_dim(est, truth)?;
    let eig = (est - truth).eigen()?;
    Ok(eig.min().abs().max(eig.max().abs()))
}

/// Whether the minimum eigenvalue exceeds `tol`, and that eigenvalue.
pub fn is_pd(a: &SymMatrix, tol: f64) -> Result<(bool, f64)> {
    let min = a.min_eigenvalue()?;
    Ok((min > tol, min))
}

/// Support recovery over the strict upper triangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportScore {
    pub tpr: f64,
    pub fpr: f64,
    pub true_support_size: usize,
    pub est_support_size: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    /// The truth has no edges, so `tpr` is defined as 1.
    pub empty_truth: bool,
    /// The truth has no zero pairs, so `fpr` is defined as 0.
    pub full_truth: bool,
}

pub fn support_score(est: &SymMatrix, truth: &SymMatrix, zero_tol: f64) -> Result<SupportScore> {
    same_dim(est, truth)?;
    let p = est.dim();
    let (mut true_edges, mut est_edges, mut tp, mut fp, mut zeros) = (0, 0, 0, 0, 0);
    for i in 0..p {
        for j in (i + 1)..p {
            let t = truth.get(i, j).abs() > zero_tol;
            let e = est.get(i, j).abs() > zero_tol;
            true_edges += usize::from(t);
            est_edges += usize::from(e);
            zeros += usize::from(!t);
            tp += usize::from(t && e);
            fp += usize::from(!t && e);
        }
    }
    Ok(SupportScore {
        tpr: if true_edges == 0 { 1.0 } else { tp as f64 / true_edges as f64 },
        fpr: if zeros == 0 { 0.0 } else { fp as f64 / zeros as f64 },
        true_support_size: true_edges,
        est_support_size: est_edges,
        true_positives: tp,
        false_positives: fp,
        empty_truth: true_edges == 0,
        full_truth: zeros == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub lambda: f64,
    pub score: SupportScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Ordered by λ descending.
    pub points: Vec<RocPoint>,
    /// Index of the CV-selected λ, when one was supplied.
    pub marker: Option<usize>,
}

/// One solve per grid value, warm-started down the path; each point scores
/// the support of Θ. A point whose solve reaches the iteration cap is
/// scored from its last iterate.
///
/// `grid` is sorted descending before solving. `selected`, if given, marks
/// the grid point closest to it.
pub fn roc_curve(
    sample: &SymMatrix,
    truth: &SymMatrix,
    grid: &[f64],
    settings: &AdmmSettings,
    selected: Option<f64>,
) -> Result<RocCurve> {
    same_dim(sample, truth)?;
    let mut lambdas = grid.to_vec();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    let mut warm = None;
    let points = lambdas
        .iter()
        .map(|&lambda| {
            let (fit, _) = solve_scored(sample, &settings.lambda(lambda), warm.as_ref())?;
            warm = fit.warm_start();
            Ok(RocPoint {
                lambda,
                score: support_score(&fit.sparse, truth, ZERO_TOL)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let marker = selected.and_then(|s| {
        lambdas
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - s).abs().total_cmp(&(b.1 - s).abs()))
            .map(|(i, _)| i)
    });
    Ok(RocCurve { points, marker })
}

/// An edge of a covariance graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

impl Edge {
    pub fn sign(&self) -> i8 {
        if self.weight > 0.0 { 1 } else { -1 }
    }
}

/// Nonzero off-diagonal entries of the strict upper triangle.
pub fn edge_list(a: &SymMatrix, zero_tol: f64) -> Vec<Edge> {
    let p = a.dim();
    let mut out = Vec::new();
    for i in 0..p {
        for j in (i + 1)..p {
            let w = a.get(i, j);
            if w.abs() > zero_tol {
                out.push(Edge { i, j, weight: w });
            }
        }
    }
    out
}
