//! Repeated-measures data and the sample covariance estimators built on it.
//!
//! Observations follow the one-way random effect layout
//! `Y_ij = b_i + e_ij`, `j = 1..n_i`, `i = 1..m`. Four sample estimators are
//! provided:
//!
//! * [`within_sample`]: pooled within-subject covariance, divisor `N - m`.
//! * [`aggregated_sample`]: covariance of subject means, divisor `m - 1`.
//!   Biased for the between-subject covariance by `sum_i (m n_i)^-1 Σε`.
//! * [`between_sample`]: `aggregated - within / n*`, unbiased for `Σb`.
//! * [`anova_sample`]: the MANOVA estimator with weighting constant `n0`.
//!
//! All four use two-pass summation (means first, then centered cross products).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SymMatrix;

/// One subject's `n_i × p` block of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectBlock {
    pub id: String,
    observations: DMatrix<f64>,
}

impl SubjectBlock {
    pub fn new(id: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let id = id.into();
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidData(format!("subject {id:?} has no observations")));
        }
        let p = rows[0].len();
        if p == 0 {
            return Err(Error::InvalidData(format!("subject {id:?} has zero-width rows")));
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::InvalidData(format!(
                    "subject {id:?} row {r} has {} values, expected {p}",
                    row.len()
                )));
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "subject {id:?} row {r} column {c} is not finite"
                )));
            }
        }
        Ok(Self {
            id,
            observations: DMatrix::from_fn(n, p, |i, j| rows[i][j]),
        })
    }

    pub(crate) fn from_matrix(id: String, observations: DMatrix<f64>) -> Self {
        Self { id, observations }
    }

    pub fn n(&self) -> usize {
        self.observations.nrows()
    }

    pub fn p(&self) -> usize {
        self.observations.ncols()
    }

    pub fn observations(&self) -> &DMatrix<f64> {
        &self.observations
    }

    pub fn row(&self, j: usize) -> Vec<f64> {
        self.observations.row(j).iter().copied().collect()
    }

    pub fn mean(&self) -> DVector<f64> {
        let n = self.n() as f64;
        DVector::from_fn(self.p(), |k, _| self.observations.column(k).sum() / n)
    }
}

/// Grouped repeated measurements: `m >= 2` subjects, each with `n_i >= 1`
/// rows of the same dimension `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatedData {
    subjects: Vec<SubjectBlock>,
    p: usize,
    names: Vec<String>,
}

impl RepeatedData {
    pub fn new(subjects: Vec<SubjectBlock>) -> Result<Self> {
        if subjects.len() < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 subjects, got {}",
                subjects.len()
            )));
        }
        let p = subjects[0].p();
        if let Some(bad) = subjects.iter().find(|s| s.p() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                actual: bad.p(),
            });
        }
        let names = (1..=p).map(|k| format!("v{k}")).collect();
        Ok(Self { subjects, p, names })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                actual: names.len(),
            });
        }
        self.names = names;
        Ok(self)
    }

    pub fn subjects(&self) -> &[SubjectBlock] {
        &self.subjects
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.subjects.len()
    }

    pub fn total(&self) -> usize {
        self.subjects.iter().map(SubjectBlock::n).sum()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.subjects.iter().map(SubjectBlock::n).collect()
    }

    /// The subjects at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let subjects = indices.iter().map(|&i| self.subjects[i].clone()).collect();
        Self::new(subjects)?.with_names(self.names.clone())
    }
}

/// Scalar summaries of the group-size design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub m: usize,
    pub total: usize,
    /// Harmonic-mean group size `m / sum_i 1/n_i`.
    pub n_star: f64,
    /// MANOVA weighting constant `(N - N^-1 sum_i n_i^2) / (m - 1)`.
    pub n_zero: f64,
    /// `max_i n_i / n0`; equals 1 for balanced designs.
    pub imbalance: f64,
    pub max_group: usize,
}

impl DesignSummary {
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let m = sizes.len();
        if m < 2 {
            return Err(Error::DegenerateDesign(format!("need m >= 2 subjects, got {m}")));
        }
        if sizes.iter().any(|&n| n == 0) {
            return Err(Error::InvalidData("group sizes must be >= 1".into()));
        }
        let total: usize = sizes.iter().sum();
        let n_star = harmonic_size(sizes);
        // (N² − Σ n_i²) / (N (m − 1)), one rounding when the integers are exact.
        let sq_sum: u128 = sizes.iter().map(|&n| (n as u128) * (n as u128)).sum();
        let n_zero = ((total as u128).pow(2) - sq_sum) as f64 / (total as f64 * (m as f64 - 1.0));
        let max_group = *sizes.iter().max().expect("m >= 2");
        Ok(Self {
            m,
            total,
            n_star,
            n_zero,
            imbalance: max_group as f64 / n_zero,
            max_group,
        })
    }

    pub fn is_balanced(&self) -> bool {
        self.imbalance == 1.0
    }
}

/// `m / Σ 1/n_i`, evaluated over a common denominator so that it is exact
/// for balanced designs; falls back to floating point if the integers grow
/// past 2^53.
fn harmonic_size(sizes: &[usize]) -> f64 {
    fn gcd(a: u128, b: u128) -> u128 {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    const EXACT: u128 = 1 << 53;
    let mut distinct: Vec<usize> = sizes.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let mut lcm: u128 = 1;
    for &n in &distinct {
        let n = n as u128;
        lcm = lcm / gcd(lcm, n) * n;
        if lcm > EXACT {
            let inv_sum: f64 = sizes.iter().map(|&n| 1.0 / n as f64).sum();
            return sizes.len() as f64 / inv_sum;
        }
    }
    let denom: u128 = sizes.iter().map(|&n| lcm / n as u128).sum();
    let numer = sizes.len() as u128 * lcm;
    if numer > EXACT || denom > EXACT {
        let inv_sum: f64 = sizes.iter().map(|&n| 1.0 / n as f64).sum();
        return sizes.len() as f64 / inv_sum;
    }
    numer as f64 / denom as f64
}

pub fn design_summary(data: &RepeatedData) -> DesignSummary {
    DesignSummary::from_sizes(&data.group_sizes()).expect("RepeatedData guarantees m >= 2")
}

fn require_replication(data: &RepeatedData) -> Result<()> {
    if data.total() <= data.m() {
        return Err(Error::DegenerateDesign(format!(
            "no within-subject replication (N = m = {})",
            data.m()
        )));
    }
    Ok(())
}

/// Pooled within-subject covariance `(N - m)^-1 sum_ij (Y_ij - Ybar_i)(Y_ij - Ybar_i)ᵀ`.
pub fn within_sample(data: &RepeatedData) -> Result<SymMatrix> {
    require_replication(data)?;
    let p = data.p();
    let mut centered = DMatrix::zeros(data.total(), p);
    let mut row = 0;
    for s in data.subjects() {
        let mean = s.mean();
        for j in 0..s.n() {
            for k in 0..p {
                centered[(row, k)] = s.observations[(j, k)] - mean[k];
            }
            row += 1;
        }
    }
    let scatter = centered.tr_mul(&centered);
    Ok(SymMatrix::symmetrize(
        scatter / (data.total() - data.m()) as f64,
    ))
}

/// Sample covariance of the subject means, centered at the mean of means.
pub fn aggregated_sample(data: &RepeatedData) -> Result<SymMatrix> {
    let m = data.m();
    if m < 2 {
        return Err(Error::DegenerateDesign("aggregated estimator needs m >= 2".into()));
    }
    let means = subject_means(data);
    let grand = means.row_mean();
    let centered = DMatrix::from_fn(m, data.p(), |i, k| means[(i, k)] - grand[k]);
    Ok(SymMatrix::symmetrize(
        centered.tr_mul(&centered) / (m - 1) as f64,
    ))
}

/// Bias-corrected between-subject estimate `aggregated - within / n*`.
///
/// May be indefinite and may carry negative diagonal entries; see
/// [`SampleDiagnostics`].
pub fn between_sample(data: &RepeatedData) -> Result<SymMatrix> {
    require_replication(data)?;
    let within = within_sample(data)?;
    let aggregated = aggregated_sample(data)?;
    let n_star = design_summary(data).n_star;
    Ok(&aggregated - &within.scaled(1.0 / n_star))
}

/// MANOVA-based between-subject estimate
/// `n0^-1 { sum_i n_i/(m-1) (Ybar_i - Ybar)(Ybar_i - Ybar)ᵀ - within }`,
/// with `Ybar` the observation-weighted grand mean.
pub fn anova_sample(data: &RepeatedData) -> Result<SymMatrix> {
    require_replication(data)?;
    let design = design_summary(data);
    if design.n_zero <= 0.0 {
        return Err(Error::DegenerateDesign("n0 must be positive".into()));
    }
    let m = data.m();
    let p = data.p();
    let means = subject_means(data);
    let n_total = data.total() as f64;
    let mut grand = vec![0.0; p];
    for s in data.subjects() {
        for k in 0..p {
            grand[k] += s.observations.column(k).sum();
        }
    }
    grand.iter_mut().for_each(|g| *g /= n_total);
    // Rows scaled by sqrt(n_i) so the cross product carries the weights.
    let weighted = DMatrix::from_fn(m, p, |i, k| {
        (data.subjects[i].n() as f64).sqrt() * (means[(i, k)] - grand[k])
    });
    let between_ms = weighted.tr_mul(&weighted) / (m - 1) as f64;
    let within = within_sample(data)?;
    Ok(SymMatrix::symmetrize(
        (between_ms - within.as_matrix()) / design.n_zero,
    ))
}

/// `m × p` matrix whose rows are the subject means.
fn subject_means(data: &RepeatedData) -> DMatrix<f64> {
    let mut means = DMatrix::zeros(data.m(), data.p());
    for (i, s) in data.subjects().iter().enumerate() {
        means.row_mut(i).copy_from(&s.mean().transpose());
    }
    means
}

/// Which sample estimate to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleKind {
    Within,
    Between,
    Anova,
    Aggregated,
}

impl SampleKind {
    pub const ALL: [SampleKind; 4] = [
        SampleKind::Within,
        SampleKind::Between,
        SampleKind::Anova,
        SampleKind::Aggregated,
    ];

    pub fn compute(self, data: &RepeatedData) -> Result<SymMatrix> {
        match self {
            SampleKind::Within => within_sample(data),
            SampleKind::Between => between_sample(data),
            SampleKind::Anova => anova_sample(data),
            SampleKind::Aggregated => aggregated_sample(data),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SampleKind::Within => "within",
            SampleKind::Between => "between",
            SampleKind::Anova => "anova",
            SampleKind::Aggregated => "aggregated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Flags for sample estimates that are not valid covariance matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDiagnostics {
    pub min_eigenvalue: f64,
    pub negative_diagonal: Vec<usize>,
}

impl SampleDiagnostics {
    pub fn of(s: &SymMatrix) -> Result<Self> {
        Ok(Self {
            min_eigenvalue: s.min_eigenvalue()?,
            negative_diagonal: s
                .diagonal()
                .iter()
                .enumerate()
                .filter(|(_, &d)| d < 0.0)
                .map(|(k, _)| k)
                .collect(),
        })
    }

    pub fn is_indefinite(&self) -> bool {
        self.min_eigenvalue < 0.0
    }
}

/// `D^-1/2 Σ D^-1/2` with `D = diag(Σ)`. Output diagonal is exactly 1.
pub fn to_correlation(cov: &SymMatrix) -> Result<SymMatrix> {
    let diag = cov.diagonal();
    let bad: Vec<usize> = diag
        .iter()
        .enumerate()
        .filter(|(_, &d)| d <= 0.0)
        .map(|(k, _)| k)
        .collect();
    if !bad.is_empty() {
        return Err(Error::NonpositiveDiagonal { indices: bad });
    }
    let sd: Vec<f64> = diag.iter().map(|d| d.sqrt()).collect();
    Ok(SymMatrix::from_fn(cov.dim(), |i, j| {
        if i == j {
            1.0
        } else {
            cov.get(i, j) / (sd[i] * sd[j])
        }
    }))
}
