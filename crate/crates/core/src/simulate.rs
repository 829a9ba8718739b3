//! Simulation studies for the random-effect model `Y_ij = b_i + e_ij` with
//! Gaussian `b_i ~ N(0, Σb)` and `e_ij ~ N(0, Σε)`.
//!
//! Four covariance pairs are available:
//!
//! | model | Σb                    | Σε                                 |
//! |-------|-----------------------|------------------------------------|
//! | M1    | banded, bandwidth 10  | banded with alternating signs      |
//! | M2    | AR(1), 0.6^|j-k|      | AR(1), (-0.6)^|j-k|                |
//! | M3    | banded                | a × banded                         |
//! | M4    | banded                | a × banded with alternating signs  |
//!
//! A study runs `replicates` independent datasets through
//! generate → cross-validate → solve → score. Replicate `r` draws from
//! ChaCha stream `r` of the study seed, so it can be rerun in isolation.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::matrix::SymMatrix;
use crate::metrics::{frobenius_error, is_pd, roc_curve, spectral_error, support_score, RocCurve};
use crate::model::{design_summary, DesignSummary, RepeatedData, SampleKind, SubjectBlock};
use crate::solver::{soft_threshold_offdiag, solve_scored, AdmmSettings, ZERO_TOL};
use crate::tuning::{kfold_cv, lambda_grid, CvConfig, CvResult, EstimatorKind, Scale, SelectionRule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TemplateKind {
    /// `scale · (1 − |j−k|/bandwidth)₊`, times `(−1)^{|j−k|}` when alternating.
    Banded {
        bandwidth: f64,
        alternating: bool,
        scale: f64,
    },
    /// `scale · base^{|j−k|}`.
    Ar1 { base: f64, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovTemplate {
    pub kind: TemplateKind,
    pub p: usize,
}

impl CovTemplate {
    pub fn banded(p: usize, bandwidth: f64, alternating: bool, scale: f64) -> Self {
        Self {
            kind: TemplateKind::Banded {
                bandwidth,
                alternating,
                scale,
            },
            p,
        }
    }

    pub fn ar1(p: usize, base: f64, scale: f64) -> Self {
        Self {
            kind: TemplateKind::Ar1 { base, scale },
            p,
        }
    }

    fn entries(&self) -> Result<SymMatrix> {
        if self.p == 0 {
            return Err(Error::InvalidParameter("template dimension must be >= 1".into()));
        }
        match self.kind {
            TemplateKind::Banded {
                bandwidth,
                alternating,
                scale,
            } => {
                if !(bandwidth > 0.0) || !(scale > 0.0) {
                    return Err(Error::InvalidParameter("banded template needs bandwidth, scale > 0".into()));
                }
                Ok(SymMatrix::from_fn(self.p, |j, k| {
                    let d = k.abs_diff(j);
                    let v = scale * (1.0 - d as f64 / bandwidth).max(0.0);
                    if alternating && d % 2 == 1 { -v } else { v }
                }))
            }
            TemplateKind::Ar1 { base, scale } => {
                if !(base.abs() < 1.0) || !(scale > 0.0) {
                    return Err(Error::InvalidParameter("AR(1) template needs |base| < 1, scale > 0".into()));
                }
                Ok(SymMatrix::from_fn(self.p, |j, k| scale * base.powi(k.abs_diff(j) as i32)))
            }
        }
    }
}

/// The closed-form template matrix; fails if it is not positive definite.
pub fn build_template(template: &CovTemplate) -> Result<SymMatrix> {
    let m = template.entries()?;
    let min_eigenvalue = m.min_eigenvalue()?;
    if min_eigenvalue <= 0.0 {
        return Err(Error::NotPositiveDefinite { min_eigenvalue });
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    M1,
    M2,
    M3,
    M4,
}

impl Model {
    /// Templates for `(Σb, Σε)`; `a` is the inverse signal-to-noise ratio
    /// used by M3 and M4.
    pub fn templates(self, p: usize, a: f64) -> (CovTemplate, CovTemplate) {
        let b = CovTemplate::banded(p, 10.0, false, 1.0);
        match self {
            Model::M1 => (b, CovTemplate::banded(p, 10.0, true, 1.0)),
            Model::M2 => (CovTemplate::ar1(p, 0.6, 1.0), CovTemplate::ar1(p, -0.6, 1.0)),
            Model::M3 => (b, CovTemplate::banded(p, 10.0, false, a)),
            Model::M4 => (b, CovTemplate::banded(p, 10.0, true, a)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase", deny_unknown_fields)]
pub enum GroupSizes {
    Explicit { sizes: Vec<usize> },
    Balanced { n: usize },
    /// `n_i = a` for the first `m − 1` subjects and `n_m = total − (m − 1) a`.
    Imbalance { a: usize, total: usize },
}

impl GroupSizes {
    pub fn resolve(&self, m: usize) -> Result<Vec<usize>> {
        let sizes = match self {
            GroupSizes::Explicit { sizes } => {
                if sizes.len() != m {
                    return Err(Error::InvalidParameter(format!(
                        "group_sizes.sizes has {} entries, expected m = {m}",
                        sizes.len()
                    )));
                }
                sizes.clone()
            }
            GroupSizes::Balanced { n } => vec![*n; m],
            GroupSizes::Imbalance { a, total } => {
                let rest = (m.saturating_sub(1)) * a;
                if *total <= rest {
                    return Err(Error::InvalidParameter(format!(
                        "group_sizes.total = {total} leaves no observations for the last subject \
                         (m - 1 = {} subjects of size a = {a})",
                        m.saturating_sub(1)
                    )));
                }
                let mut v = vec![*a; m - 1];
                v.push(total - rest);
                v
            }
        };
        if sizes.iter().any(|&n| n == 0) {
            return Err(Error::InvalidParameter("group_sizes: every subject needs >= 1 observation".into()));
        }
        Ok(sizes)
    }
}

/// Which true covariance an estimate is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Between,
    Within,
}

impl Target {
    pub fn natural(sample: SampleKind) -> Self {
        match sample {
            SampleKind::Within => Target::Within,
            _ => Target::Between,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Evaluation {
    pub estimator: EstimatorKind,
    pub target: Target,
}

impl Evaluation {
    pub fn natural(estimator: EstimatorKind) -> Self {
        Self {
            estimator,
            target: Target::natural(estimator.sample),
        }
    }

    pub fn label(&self) -> String {
        format!("{}:{}", self.estimator.label(), match self.target {
            Target::Between => "between",
            Target::Within => "within",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvPlan {
    #[serde(default = "default_folds")]
    pub k_folds: usize,
    /// Length of the per-dataset grid from [`lambda_grid`].
    #[serde(default = "default_grid_length")]
    pub grid_length: usize,
    #[serde(default)]
    pub rule: SelectionRule,
}

fn default_folds() -> usize {
    5
}

fn default_grid_length() -> usize {
    20
}

impl Default for CvPlan {
    fn default() -> Self {
        Self {
            k_folds: default_folds(),
            grid_length: default_grid_length(),
            rule: SelectionRule::Min,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub model: Model,
    pub p: usize,
    pub m: usize,
    pub group_sizes: GroupSizes,
    /// Inverse signal-to-noise ratio `a` for M3/M4; ignored otherwise.
    #[serde(default = "one")]
    pub snr_a: f64,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub cv: CvPlan,
    /// Number of leading replicates whose CV curves and ROC samples are kept.
    #[serde(default)]
    pub curves: usize,
    #[serde(default = "default_roc_length")]
    pub roc_grid_length: usize,
    #[serde(default)]
    pub execution: Execution,
}

fn one() -> f64 {
    1.0
}

fn default_roc_length() -> usize {
    50
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.p < 2 {
            return bad(format!("p: must be >= 2, got {}", self.p));
        }
        if self.m < 2 {
            return bad(format!("m: must be >= 2, got {}", self.m));
        }
        if self.replicates == 0 {
            return bad("replicates: must be >= 1".into());
        }
        if !(self.snr_a > 0.0 && self.snr_a.is_finite()) {
            return bad(format!("snr_a: must be > 0, got {}", self.snr_a));
        }
        if self.cv.k_folds < 2 || self.cv.k_folds > self.m {
            return bad(format!("cv.k_folds: must be in 2..=m, got {}", self.cv.k_folds));
        }
        if self.cv.grid_length < 2 {
            return bad("cv.grid_length: must be >= 2".into());
        }
        if self.curves > 0 && self.roc_grid_length < 2 {
            return bad("roc_grid_length: must be >= 2".into());
        }
        self.group_sizes.resolve(self.m)?;
        Ok(())
    }

    pub fn sizes(&self) -> Result<Vec<usize>> {
        self.group_sizes.resolve(self.m)
    }

    pub fn truths(&self) -> Result<(SymMatrix, SymMatrix)> {
        let (b, e) = self.model.templates(self.p, self.snr_a);
        Ok((build_template(&b)?, build_template(&e)?))
    }
}

/// Symmetric square-root factors of the two templates.
#[derive(Debug, Clone)]
pub struct Sampler {
    root_b: DMatrix<f64>,
    root_eps: DMatrix<f64>,
}

impl Sampler {
    /// Accepts PSD inputs (eigenvalues down to −1e-12 relative are clamped).
    pub fn new(sigma_b: &SymMatrix, sigma_eps: &SymMatrix) -> Result<Self> {
        if sigma_b.dim() != sigma_eps.dim() {
            return Err(Error::DimensionMismatch {
                expected: sigma_b.dim(),
                actual: sigma_eps.dim(),
            });
        }
        let root = |s: &SymMatrix| -> Result<DMatrix<f64>> {
            let eig = s.eigen()?;
            let tol = 1e-12 * eig.max().abs().max(f64::MIN_POSITIVE);
            if eig.min() < -tol {
                return Err(Error::NotPositiveDefinite {
                    min_eigenvalue: eig.min(),
                });
            }
            Ok(eig.reconstruct(|v| v.max(0.0).sqrt()).into_inner())
        };
        Ok(Self {
            root_b: root(sigma_b)?,
            root_eps: root(sigma_eps)?,
        })
    }

    pub fn p(&self) -> usize {
        self.root_b.nrows()
    }

    fn normal(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(self.p(), |_, _| rng.sample(StandardNormal))
    }

    /// Draws one dataset; subject `i` gets `sizes[i]` observations.
    pub fn draw(&self, sizes: &[usize], rng: &mut ChaCha8Rng) -> Result<RepeatedData> {
        let p = self.p();
        let subjects = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let b = &self.root_b * self.normal(rng);
                let mut obs = DMatrix::zeros(n, p);
                for j in 0..n {
                    let e = &self.root_eps * self.normal(rng);
                    obs.row_mut(j).copy_from(&(&b + e).transpose());
                }
                SubjectBlock::from_matrix(format!("s{}", i + 1), obs)
            })
            .collect();
        RepeatedData::new(subjects)
    }
}

/// RNG for replicate `r` of a study seeded with `seed`.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// One dataset from the configured model, deterministic in `(config.seed, replicate)`.
pub fn generate(config: &StudyConfig, sigma_b: &SymMatrix, sigma_eps: &SymMatrix, replicate: u64) -> Result<RepeatedData> {
    let sampler = Sampler::new(sigma_b, sigma_eps)?;
    sampler.draw(&config.sizes()?, &mut replicate_rng(config.seed, replicate))
}

/// Per-replicate scores of one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateScore {
    pub evaluation: Evaluation,
    pub lambda: f64,
    pub frobenius: f64,
    pub spectral: f64,
    pub sample_frobenius: f64,
    pub sample_spectral: f64,
    pub unconstrained_frobenius: f64,
    pub unconstrained_spectral: f64,
    pub pd: bool,
    pub unconstrained_pd: bool,
    pub tpr: f64,
    pub fpr: f64,
    pub used_fast_path: bool,
    /// CV fold fits plus the final fit that stopped at the iteration cap.
    pub unconverged_fits: usize,
    pub cv: Option<CvResult>,
    pub roc: Option<RocCurve>,
}

impl ReplicateScore {
    /// `(metric name, value)` pairs aggregated into the report.
    pub fn metrics(&self) -> [(&'static str, f64); 12] {
        let pct = |b: bool| if b { 100.0 } else { 0.0 };
        [
            ("frobenius", self.frobenius),
            ("spectral", self.spectral),
            ("sample_frobenius", self.sample_frobenius),
            ("sample_spectral", self.sample_spectral),
            ("unconstrained_frobenius", self.unconstrained_frobenius),
            ("unconstrained_spectral", self.unconstrained_spectral),
            ("pd_percent", pct(self.pd)),
            ("unconstrained_pd_percent", pct(self.unconstrained_pd)),
            ("tpr", self.tpr),
            ("fpr", self.fpr),
            ("lambda", self.lambda),
            ("unconverged_fits", self.unconverged_fits as f64),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub outcome: std::result::Result<Vec<ReplicateScore>, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Standard deviation over replicates divided by √count.
    pub se: f64,
    pub count: usize,
}

impl MetricSummary {
    fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Self { mean, se, count: n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub evaluation: Evaluation,
    pub metric: String,
    pub summary: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub design: DesignSummary,
    pub evaluations: Vec<Evaluation>,
    pub replicates: Vec<ReplicateRecord>,
    pub completed: usize,
    pub rows: Vec<SummaryRow>,
}

impl StudyReport {
    pub fn metric(&self, evaluation: &Evaluation, metric: &str) -> Option<MetricSummary> {
        self.rows
            .iter()
            .find(|r| &r.evaluation == evaluation && r.metric == metric)
            .map(|r| r.summary)
    }

    pub fn failures(&self) -> Vec<(usize, &str)> {
        self.replicates
            .iter()
            .filter_map(|r| r.outcome.as_ref().err().map(|e| (r.replicate, e.as_str())))
            .collect()
    }
}

/// Generates replicate `replicate` and scores every evaluation on it.
pub fn run_replicate(
    config: &StudyConfig,
    evaluations: &[Evaluation],
    sampler: &Sampler,
    truths: (&SymMatrix, &SymMatrix),
    settings: &AdmmSettings,
    replicate: usize,
) -> Result<Vec<ReplicateScore>> {
    let mut rng = replicate_rng(config.seed, replicate as u64);
    let data = sampler.draw(&config.sizes()?, &mut rng)?;
    let cv_seed: u64 = rng.gen();
    let keep_curves = replicate < config.curves;
    evaluations
        .iter()
        .map(|ev| score_evaluation(&data, ev, config, truths, settings, cv_seed, keep_curves))
        .collect()
}

fn score_evaluation(
    data: &RepeatedData,
    ev: &Evaluation,
    config: &StudyConfig,
    (sigma_b, sigma_eps): (&SymMatrix, &SymMatrix),
    settings: &AdmmSettings,
    cv_seed: u64,
    keep_curves: bool,
) -> Result<ReplicateScore> {
    let truth = match ev.target {
        Target::Between => sigma_b.clone(),
        Target::Within => sigma_eps.clone(),
    };
    let truth = match ev.estimator.scale {
        Scale::Covariance => truth,
        Scale::Correlation => crate::model::to_correlation(&truth)?,
    };
    let sample = ev.estimator.sample_estimate(data)?;
    let grid = lambda_grid(&sample, config.cv.grid_length)?;
    let mut cv_config = CvConfig::new(ev.estimator, grid, cv_seed);
    cv_config.k_folds = config.cv.k_folds;
    cv_config.execution = config.execution;
    let cv = kfold_cv(data, &cv_config, settings)?;
    let lambda = cv.selected(config.cv.rule);

    let (fit, converged) = solve_scored(&sample, &settings.lambda(lambda), None)?;
    let unconstrained = soft_threshold_offdiag(&sample, lambda);
    let support = support_score(&fit.sparse, &truth, ZERO_TOL)?;
    let roc = if keep_curves {
        let roc_grid = lambda_grid(&sample, config.roc_grid_length)?;
        Some(roc_curve(&sample, &truth, &roc_grid, settings, Some(lambda))?)
    } else {
        None
    };
    Ok(ReplicateScore {
        evaluation: *ev,
        lambda,
        frobenius: frobenius_error(&fit.solution, &truth)?,
        spectral: spectral_error(&fit.solution, &truth)?,
        sample_frobenius: frobenius_error(&sample, &truth)?,
        sample_spectral: spectral_error(&sample, &truth)?,
        unconstrained_frobenius: frobenius_error(&unconstrained, &truth)?,
        unconstrained_spectral: spectral_error(&unconstrained, &truth)?,
        pd: is_pd(&fit.solution, 0.5 * fit.delta)?.0,
        unconstrained_pd: is_pd(&unconstrained, 0.0)?.0,
        tpr: support.tpr,
        fpr: support.fpr,
        used_fast_path: fit.used_fast_path,
        unconverged_fits: cv.unconverged_fits + usize::from(!converged),
        cv: keep_curves.then_some(cv),
        roc,
    })
}

/// Runs every replicate and summarizes the completed ones. Replicates that
/// fail are recorded with their error and excluded from the summaries.
pub fn run_study(config: &StudyConfig, evaluations: &[Evaluation], settings: &AdmmSettings) -> Result<StudyReport> {
    config.validate()?;
    settings.validate()?;
    if evaluations.is_empty() {
        return Err(Error::InvalidParameter("estimators: at least one is required".into()));
    }
    let sizes = config.sizes()?;
    let design = DesignSummary::from_sizes(&sizes)?;
    let (sigma_b, sigma_eps) = config.truths()?;
    let sampler = Sampler::new(&sigma_b, &sigma_eps)?;

    let replicates: Vec<ReplicateRecord> = map_indexed(config.replicates, config.execution, |r| ReplicateRecord {
        replicate: r,
        outcome: run_replicate(config, evaluations, &sampler, (&sigma_b, &sigma_eps), settings, r)
            .map_err(|e| e.to_string()),
    });

    let done: Vec<&Vec<ReplicateScore>> = replicates.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    let mut rows = Vec::new();
    if !done.is_empty() {
        for (k, ev) in evaluations.iter().enumerate() {
            let names = done[0][k].metrics().map(|(n, _)| n);
            for (slot, name) in names.iter().enumerate() {
                let values: Vec<f64> = done.iter().map(|scores| scores[k].metrics()[slot].1).collect();
                rows.push(SummaryRow {
                    evaluation: *ev,
                    metric: name.to_string(),
                    summary: MetricSummary::of(&values),
                });
            }
        }
    }
    Ok(StudyReport {
        config: config.clone(),
        design,
        evaluations: evaluations.to_vec(),
        completed: done.len(),
        replicates,
        rows,
    })
}

/// A parameter swept across otherwise identical studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Sweep {
    /// Sets `group_sizes` to the imbalance scheme with each `a` (total kept).
    ImbalanceA(Vec<usize>),
    SnrA(Vec<f64>),
    Subjects(Vec<usize>),
}

impl Sweep {
    pub fn expand(&self, base: &StudyConfig) -> Result<Vec<StudyConfig>> {
        let mut out = Vec::new();
        match self {
            Sweep::ImbalanceA(values) => {
                let total = match &base.group_sizes {
                    GroupSizes::Imbalance { total, .. } => *total,
                    _ => {
                        return Err(Error::InvalidParameter(
                            "sweep.imbalance_a: requires group_sizes.scheme = \"imbalance\"".into(),
                        ))
                    }
                };
                for &a in values {
                    let mut c = base.clone();
                    c.group_sizes = GroupSizes::Imbalance { a, total };
                    out.push(c);
                }
            }
            Sweep::SnrA(values) => {
                for &a in values {
                    let mut c = base.clone();
                    c.snr_a = a;
                    out.push(c);
                }
            }
            Sweep::Subjects(values) => {
                for &m in values {
                    let mut c = base.clone();
                    c.m = m;
                    out.push(c);
                }
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidParameter("sweep: needs at least one value".into()));
        }
        Ok(out)
    }
}

/// Column header of [`write_summary_csv`].
pub const SUMMARY_HEADER: [&str; 13] = [
    "model", "p", "m", "total", "imbalance", "snr_a", "replicates_completed", "estimator", "target",
    "metric", "mean", "se", "count",
];

/// One row per evaluation × metric, full round-trip precision.
pub fn write_summary_csv<W: Write>(reports: &[StudyReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::InvalidData(format!("csv write failed: {e}"));
    w.write_record(SUMMARY_HEADER).map_err(io)?;
    for r in reports {
        for row in &r.rows {
            w.write_record([
                format!("{:?}", r.config.model),
                r.config.p.to_string(),
                r.design.m.to_string(),
                r.design.total.to_string(),
                r.design.imbalance.to_string(),
                r.config.snr_a.to_string(),
                r.completed.to_string(),
                row.evaluation.estimator.label(),
                format!("{:?}", row.evaluation.target).to_lowercase(),
                row.metric.clone(),
                row.summary.mean.to_string(),
                row.summary.se.to_string(),
                row.summary.count.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::InvalidData(format!("csv flush failed: {e}")))?;
    Ok(())
}

/// CV curves of the replicates that kept them: one row per replicate ×
/// evaluation × λ.
pub fn write_cv_curves_csv<W: Write>(reports: &[StudyReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::InvalidData(format!("csv write failed: {e}"));
    w.write_record([
        "imbalance", "snr_a", "m", "replicate", "estimator", "target", "lambda_index", "lambda", "cv_error", "cv_se",
        "selected_min", "selected_one_se",
    ])
    .map_err(io)?;
    for r in reports {
        for rec in &r.replicates {
            let Ok(scores) = &rec.outcome else { continue };
            for s in scores {
                let Some(cv) = &s.cv else { continue };
                for (l, lam) in cv.lambdas.iter().enumerate() {
                    w.write_record([
                        r.design.imbalance.to_string(),
                        r.config.snr_a.to_string(),
                        r.design.m.to_string(),
                        rec.replicate.to_string(),
                        s.evaluation.estimator.label(),
                        format!("{:?}", s.evaluation.target).to_lowercase(),
                        l.to_string(),
                        lam.to_string(),
                        cv.mean_errors[l].to_string(),
                        cv.standard_errors[l].to_string(),
                        (l == cv.selected_min).to_string(),
                        (l == cv.selected_one_se).to_string(),
                    ])
                    .map_err(io)?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::InvalidData(format!("csv flush failed: {e}")))?;
    Ok(())
}

/// ROC samples of the replicates that kept them. `grid_length` records the
/// sweep density alongside each point.
pub fn write_roc_csv<W: Write>(reports: &[StudyReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::InvalidData(format!("csv write failed: {e}"));
    w.write_record([
        "imbalance", "snr_a", "m", "replicate", "estimator", "target", "grid_length", "lambda", "tpr", "fpr",
        "cv_selected",
    ])
    .map_err(io)?;
    for r in reports {
        for rec in &r.replicates {
            let Ok(scores) = &rec.outcome else { continue };
            for s in scores {
                let Some(roc) = &s.roc else { continue };
                for (i, pt) in roc.points.iter().enumerate() {
                    w.write_record([
                        r.design.imbalance.to_string(),
                        r.config.snr_a.to_string(),
                        r.design.m.to_string(),
                        rec.replicate.to_string(),
                        s.evaluation.estimator.label(),
                        format!("{:?}", s.evaluation.target).to_lowercase(),
                        roc.points.len().to_string(),
                        pt.lambda.to_string(),
                        pt.score.tpr.to_string(),
                        pt.score.fpr.to_string(),
                        (roc.marker == Some(i)).to_string(),
                    ])
                    .map_err(io)?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::InvalidData(format!("csv flush failed: {e}")))?;
    Ok(())
}

/// Design summary of a generated dataset, for callers that only hold data.
pub fn summarize(data: &RepeatedData) -> DesignSummary {
    design_summary(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_one_entries() {
        let (b, e) = Model::M1.templates(20, 1.0);
        let b = build_template(&b).unwrap();
        let e = build_template(&e).unwrap();
        assert_eq!(b.get(0, 0), 1.0);
        assert_eq!(b.get(0, 5), 0.5);
        assert_eq!(b.get(0, 10), 0.0);
        assert_eq!(e.get(0, 1), -0.9);
        assert_eq!(e.get(0, 2), 0.8);
    }

    #[test]
    fn model_two_entries() {
        let (b, e) = Model::M2.templates(10, 1.0);
        let b = build_template(&b).unwrap();
        let e = build_template(&e).unwrap();
        assert!((b.get(0, 2) - 0.36).abs() < 1e-15);
        assert!((e.get(0, 1) + 0.6).abs() < 1e-15);
    }

    #[test]
    fn model_three_scales_noise() {
        let (b, e) = Model::M3.templates(15, 2.0);
        let b = build_template(&b).unwrap();
        let e = build_template(&e).unwrap();
        assert_eq!(e, b.scaled(2.0));
    }

    #[test]
    fn non_pd_template_rejected() {
        assert!(build_template(&CovTemplate::ar1(3, 1.0, 1.0)).is_err());
        assert!(build_template(&CovTemplate::banded(3, 0.0, false, 1.0)).is_err());
        assert!(build_template(&CovTemplate::banded(3, 10.0, false, -1.0)).is_err());
        // A triangular band is PD at any width; extreme widths are still accepted.
        assert!(build_template(&CovTemplate::banded(3, 1000.0, false, 1.0)).is_ok());
    }

    #[test]
    fn imbalance_scheme() {
        let g = GroupSizes::Imbalance { a: 4, total: 1000 };
        let s = g.resolve(100).unwrap();
        assert_eq!(s.len(), 100);
        assert_eq!(s[99], 1000 - 99 * 4);
        assert_eq!(s.iter().sum::<usize>(), 1000);
        assert!(GroupSizes::Imbalance { a: 11, total: 1000 }.resolve(100).is_err());
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = StudyConfig {
            model: Model::M1,
            p: 6,
            m: 4,
            group_sizes: GroupSizes::Balanced { n: 3 },
            snr_a: 1.0,
            replicates: 1,
            seed: 11,
            cv: CvPlan::default(),
            curves: 0,
            roc_grid_length: 50,
            execution: Execution::Sequential,
        };
        let (b, e) = cfg.truths().unwrap();
        let d1 = generate(&cfg, &b, &e, 0).unwrap();
        let d2 = generate(&cfg, &b, &e, 0).unwrap();
        let d3 = generate(&cfg, &b, &e, 1).unwrap();
        assert_eq!(d1, d2);
        assert_ne!(d1, d3);
    }

    #[test]
    fn zero_templates_give_zero_data() {
        let tiny = SymMatrix::identity(3).scaled(1e-300);
        let sampler = Sampler::new(&tiny, &tiny).unwrap();
        let d = sampler.draw(&[2, 2], &mut replicate_rng(1, 0)).unwrap();
        assert!(d.subjects().iter().all(|s| s.observations().amax() < 1e-140));
    }
}
