//! Choosing λ: candidate grids, subject-level K-fold cross-validation with
//! the minimum and one-standard-error rules, and the closed-form tuning
//! values from the error-rate bounds.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::matrix::SymMatrix;
use crate::model::{to_correlation, DesignSummary, RepeatedData, SampleKind};
use crate::solver::{solve_scored, AdmmSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    #[serde(alias = "cov")]
    Covariance,
    #[serde(alias = "cor")]
    Correlation,
}

/// A sample estimator together with the scale it is regularized on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EstimatorKind {
    pub sample: SampleKind,
    #[serde(default)]
    pub scale: Scale,
}

impl EstimatorKind {
    pub fn covariance(sample: SampleKind) -> Self {
        Self {
            sample,
            scale: Scale::Covariance,
        }
    }

    pub fn correlation(sample: SampleKind) -> Self {
        Self {
            sample,
            scale: Scale::Correlation,
        }
    }

    /// The (unregularized) input matrix for this estimator.
    pub fn sample_estimate(&self, data: &RepeatedData) -> Result<SymMatrix> {
        let s = self.sample.compute(data)?;
        match self.scale {
            Scale::Covariance => Ok(s),
            Scale::Correlation => to_correlation(&s),
        }
    }

    pub fn label(&self) -> String {
        match self.scale {
            Scale::Covariance => self.sample.name().to_string(),
            Scale::Correlation => format!("{}-cor", self.sample.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub k_folds: usize,
    /// Strictly decreasing candidate values.
    pub lambda_grid: Vec<f64>,
    pub seed: u64,
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub execution: Execution,
}

impl CvConfig {
    pub fn new(estimator: EstimatorKind, lambda_grid: Vec<f64>, seed: u64) -> Self {
        Self {
            k_folds: 5,
            lambda_grid,
            seed,
            estimator,
            execution: Execution::Auto,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_folds < 2 {
            return Err(Error::InvalidParameter("k_folds must be >= 2".into()));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::InvalidParameter("lambda grid is empty".into()));
        }
        if self.lambda_grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::InvalidParameter("lambda values must be finite and >= 0".into()));
        }
        if self.lambda_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter("lambda grid must be strictly decreasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambdas: Vec<f64>,
    /// `fold_errors[l][v]`: squared Frobenius validation error of fold `v` at `lambdas[l]`.
    pub fold_errors: Vec<Vec<f64>>,
    pub mean_errors: Vec<f64>,
    /// Standard deviation of the fold errors divided by √K.
    pub standard_errors: Vec<f64>,
    pub selected_min: usize,
    pub selected_one_se: usize,
    /// Fold fits that reached the iteration cap; their last iterate was scored.
    #[serde(default)]
    pub unconverged_fits: usize,
}

impl CvResult {
    fn from_fold_errors(lambdas: Vec<f64>, fold_errors: Vec<Vec<f64>>, unconverged_fits: usize) -> Self {
        let k = fold_errors[0].len() as f64;
        let mean_errors: Vec<f64> = fold_errors
            .iter()
            .map(|e| e.iter().sum::<f64>() / k)
            .collect();
        let standard_errors: Vec<f64> = fold_errors
            .iter()
            .zip(&mean_errors)
            .map(|(e, mean)| {
                let var = e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
                var.sqrt() / k.sqrt()
            })
            .collect();
        // First minimum: ties resolve to the larger λ.
        let selected_min = mean_errors
            .iter()
            .enumerate()
            .fold(0, |best, (i, &e)| if e < mean_errors[best] { i } else { best });
        let cutoff = mean_errors[selected_min] + standard_errors[selected_min];
        let selected_one_se = mean_errors
            .iter()
            .position(|&e| e <= cutoff)
            .expect("the minimum itself qualifies");
        Self {
            lambdas,
            fold_errors,
            mean_errors,
            standard_errors,
            selected_min,
            selected_one_se,
            unconverged_fits,
        }
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambdas[self.selected_min]
    }

    pub fn lambda_one_se(&self) -> f64 {
        self.lambdas[self.selected_one_se]
    }

    pub fn selected(&self, rule: SelectionRule) -> f64 {
        match rule {
            SelectionRule::Min => self.lambda_min(),
            SelectionRule::OneSe => self.lambda_one_se(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionRule {
    #[default]
    Min,
    OneSe,
}

/// Random partition of subject indices `0..m` into `k` folds whose sizes
/// differ by at most one (earlier folds take the remainder). Depends only
/// on `(seed, m, k)`; indices within a fold are sorted.
pub fn fold_assignment(m: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let base = m / k;
    let extra = m % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for v in 0..k {
        let len = base + usize::from(v < extra);
        let mut fold = order[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    folds
}

struct Split {
    train: SymMatrix,
    valid: SymMatrix,
}

fn build_split(data: &RepeatedData, fold: &[usize], estimator: EstimatorKind, v: usize) -> Result<Split> {
    let infeasible = |what: &str, e: Error| Error::InfeasibleSplit(format!("fold {v} {what}: {e}"));
    let train_idx: Vec<usize> = (0..data.m()).filter(|i| fold.binary_search(i).is_err()).collect();
    let train_data = data.subset(&train_idx).map_err(|e| infeasible("training set", e))?;
    let valid_data = data.subset(fold).map_err(|e| infeasible("validation set", e))?;
    Ok(Split {
        train: estimator
            .sample_estimate(&train_data)
            .map_err(|e| infeasible("training set", e))?,
        valid: estimator
            .sample_estimate(&valid_data)
            .map_err(|e| infeasible("validation set", e))?,
    })
}

/// K-fold cross-validation over subjects.
///
/// Each fold's regularized fit on the training subjects is scored by its
/// squared Frobenius distance to the same sample estimator computed on the
/// validation subjects. `settings.lambda` is ignored; every other solver
/// setting applies to all fits.
pub fn kfold_cv(data: &RepeatedData, config: &CvConfig, settings: &AdmmSettings) -> Result<CvResult> {
    config.validate()?;
    settings.validate()?;
    let k = config.k_folds;
    if data.m() < k {
        return Err(Error::InfeasibleSplit(format!(
            "{} subjects cannot fill {k} folds",
            data.m()
        )));
    }
    let folds = fold_assignment(data.m(), k, config.seed);
    let splits = folds
        .iter()
        .enumerate()
        .map(|(v, fold)| build_split(data, fold, config.estimator, v))
        .collect::<Result<Vec<_>>>()?;

    // Each fold walks the grid from large to small λ, warm-starting every
    // fit from the previous one. A fit stalled at the iteration cap is
    // scored from its last (feasible) iterate and counted.
    let grid = &config.lambda_grid;
    let per_fold = map_indexed(k, config.execution, |v| {
        let split = &splits[v];
        let mut warm = None;
        grid.iter()
            .map(|&lambda| {
                let (fit, converged) = solve_scored(&split.train, &settings.lambda(lambda), warm.as_ref())?;
                warm = fit.warm_start();
                Ok(((&fit.solution - &split.valid).frobenius_norm().powi(2), converged))
            })
            .collect::<Result<Vec<(f64, bool)>>>()
    });
    let per_fold = per_fold.into_iter().collect::<Result<Vec<_>>>()?;
    let unconverged = per_fold.iter().flatten().filter(|(_, ok)| !ok).count();
    let fold_errors = (0..grid.len()).map(|l| per_fold.iter().map(|f| f[l].0).collect()).collect();
    Ok(CvResult::from_fold_errors(grid.clone(), fold_errors, unconverged))
}

/// Log-spaced, strictly decreasing grid from the largest off-diagonal
/// magnitude of `sample` down to 1/100 of it.
///
/// At the top value the soft-thresholded input has no off-diagonal entries.
/// A matrix with no off-diagonal signal gets a grid anchored at machine
/// epsilon.
pub fn lambda_grid(sample: &SymMatrix, length: usize) -> Result<Vec<f64>> {
    if length < 2 {
        return Err(Error::InvalidParameter("lambda grid needs length >= 2".into()));
    }
    let top = sample.max_abs_offdiag();
    let top = if top > 0.0 { top } else { f64::EPSILON };
    let steps = (length - 1) as f64;
    Ok((0..length)
        .map(|i| top * 10f64.powf(-2.0 * i as f64 / steps))
        .collect())
}

/// Constants of the error-rate bounds; the theory leaves them unspecified
/// ("sufficiently large"), so they are user inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub c1: f64,
    pub c2: f64,
    pub m_b: f64,
    pub m_eps: f64,
}

impl TheoryConstants {
    pub const UNIT: TheoryConstants = TheoryConstants {
        c1: 1.0,
        c2: 1.0,
        m_b: 1.0,
        m_eps: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        if [self.c1, self.c2, self.m_b, self.m_eps]
            .iter()
            .all(|c| c.is_finite() && *c > 0.0)
        {
            Ok(())
        } else {
            Err(Error::InvalidParameter("theory constants must be finite and > 0".into()))
        }
    }
}

fn check_dims(m: usize, total: usize, p: usize) -> Result<()> {
    if total <= m {
        return Err(Error::InvalidParameter(format!("need N > m (N = {total}, m = {m})")));
    }
    if p < 2 {
        return Err(Error::InvalidParameter("need p >= 2".into()));
    }
    Ok(())
}

/// `C1 (N log p)^½ / (N − m)`: tuning value for the within-subject estimator.
pub fn theory_lambda_eps(m: usize, total: usize, p: usize, c: &TheoryConstants) -> Result<f64> {
    check_dims(m, total, p)?;
    c.validate()?;
    let n = total as f64;
    Ok(c.c1 * (n * (p as f64).ln()).sqrt() / (n - m as f64))
}

/// Tuning value for the bias-corrected between-subject estimator:
/// `C1 (log p / m)^½ + C2 (N log p)^½ / ((N − m) n*) + M_b / m + M_ε / (m n*)`.
pub fn theory_lambda_b(design: &DesignSummary, p: usize, c: &TheoryConstants) -> Result<f64> {
    check_dims(design.m, design.total, p)?;
    c.validate()?;
    let (m, n, lp) = (design.m as f64, design.total as f64, (p as f64).ln());
    let n_star = design.n_star;
    Ok(c.c1 * (lp / m).sqrt()
        + c.c2 * (n * lp).sqrt() / ((n - m) * n_star)
        + c.m_b / m
        + c.m_eps / (m * n_star))
}

/// Tuning value for the aggregated estimator of the between-subject
/// covariance: `C1 (log p / m)^½ + M_b / m + M_ε / n*`. The last term does
/// not vanish as `m → ∞`.
pub fn theory_lambda_0(design: &DesignSummary, p: usize, c: &TheoryConstants) -> Result<f64> {
    check_dims(design.m, design.total, p)?;
    c.validate()?;
    let (m, lp) = (design.m as f64, (p as f64).ln());
    Ok(c.c1 * (lp / m).sqrt() + c.m_b / m + c.m_eps / design.n_star)
}

/// Tuning value for the ANOVA estimator:
/// `C1 (max n_i / n0)(log p / m)^½ + C2 (N log p)^½ / (n0 (N − m))
///  + (M_b / m)(2N − n0 m)/(n0 m) + M_ε / (n0 m)`.
///
/// The `M_b` term is scaled so that it reduces to `M_b / m` for balanced
/// designs, where this value coincides with [`theory_lambda_b`].
pub fn theory_lambda_tilde_b(design: &DesignSummary, p: usize, c: &TheoryConstants) -> Result<f64> {
    check_dims(design.m, design.total, p)?;
    c.validate()?;
    let (m, n, lp) = (design.m as f64, design.total as f64, (p as f64).ln());
    let n0 = design.n_zero;
    Ok(c.c1 * (design.max_group as f64 / n0) * (lp / m).sqrt()
        + c.c2 * (n * lp).sqrt() / ((n - m) * n0)
        + c.m_b / m * ((2.0 * n - n0 * m) / (n0 * m))
        + c.m_eps / (m * n0))
}

/// Tuning value when the aggregated estimator is used for the
/// within-subject covariance: `C1 (log p / m)^½ + M_b + (2 − n*) M_ε / (2 n*)`.
pub fn theory_lambda_1(design: &DesignSummary, p: usize, c: &TheoryConstants) -> Result<f64> {
    check_dims(design.m, design.total, p)?;
    c.validate()?;
    let (m, lp) = (design.m as f64, (p as f64).ln());
    let n_star = design.n_star;
    Ok(c.c1 * (lp / m).sqrt() + c.m_b + (2.0 - n_star) * c.m_eps / (2.0 * n_star))
}
