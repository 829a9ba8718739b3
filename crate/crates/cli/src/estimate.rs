//! `repcov estimate`: one regularized fit of a chosen estimator.
//!
//! Outputs in `--out`:
//! - `matrix.csv`: the positive-definite solution Σ, labeled;
//! - `sparse.csv`: the sparse iterate Θ, whose zeros define the graph;
//! - `edges.csv`: nonzero off-diagonal entries of Θ with weights and signs;
//! - `cv.csv`: the CV curve, when λ was cross-validated;
//! - `manifest.json`: everything needed to rerun and check the fit.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use repcov::metrics::edge_list;
use repcov::model::design_summary;
use repcov::solver::AdmmSettings;
use repcov::tuning::{kfold_cv, lambda_grid, CvConfig, CvResult, EstimatorKind, Scale, SelectionRule};
use repcov::{solve, DesignSummary, RepeatedData, SampleKind, ZERO_TOL};
use serde::{Deserialize, Serialize};

use crate::output::{write_edges, write_matrix};
use crate::{write_failed, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum LambdaChoice {
    Fixed(f64),
    Cv,
}

impl FromStr for LambdaChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("cv") {
            return Ok(LambdaChoice::Cv);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(LambdaChoice::Fixed(v)),
            _ => Err(format!("expected a nonnegative number or \"cv\", got {s:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimateArgs {
    pub input: PathBuf,
    pub out: PathBuf,
    pub sample: SampleKind,
    pub scale: Scale,
    pub lambda: LambdaChoice,
    pub delta: Option<f64>,
    pub k_folds: usize,
    pub grid_length: usize,
    pub one_se: bool,
    pub seed: u64,
    pub max_iters: usize,
}

impl EstimateArgs {
    pub fn new(input: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            out: out.into(),
            sample: SampleKind::Between,
            scale: Scale::Covariance,
            lambda: LambdaChoice::Cv,
            delta: None,
            k_folds: 5,
            grid_length: 20,
            one_se: false,
            seed: 0,
            max_iters: AdmmSettings::default().max_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub k_folds: usize,
    pub seed: u64,
    pub rule: SelectionRule,
    pub grid: Vec<f64>,
    pub mean_errors: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub selected_index: usize,
    /// Fold fits scored from their last iterate after hitting `--max-iters`.
    pub unconverged_fits: usize,
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub input: String,
    pub variables: Vec<String>,
    pub design: DesignSummary,
    pub estimator: SampleKind,
    pub mode: Scale,
    pub lambda_choice: LambdaChoice,
    /// The λ that was actually used.
    pub lambda: f64,
    pub delta: f64,
    pub settings: AdmmSettings,
    pub seed: u64,
    pub cv: Option<CvSummary>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub min_eigenvalue: f64,
    pub used_fast_path: bool,
    pub final_rho: f64,
    pub edges: usize,
}

/// Runs the fit, writes outputs and returns the manifest.
pub fn cmd_estimate(args: &EstimateArgs) -> Result<Manifest, CliError> {
    if args.k_folds < 2 {
        return Err(CliError::config("--kfolds: must be >= 2"));
    }
    if let Some(d) = args.delta {
        if !(d > 0.0 && d.is_finite()) {
            return Err(CliError::config("--delta: must be a finite positive number"));
        }
    }
    let data = crate::ingest::ingest_path(&args.input)?;
    let estimator = EstimatorKind {
        sample: args.sample,
        scale: args.scale,
    };
    let sample = estimator.sample_estimate(&data).map_err(|e| match e {
        repcov::Error::NonpositiveDiagonal { indices } => {
            let named: Vec<String> = indices.iter().map(|&i| format!("{} (column {})", data.names()[i], i + 1)).collect();
            CliError::input(format!(
                "correlation scale needs positive variances; nonpositive diagonal for {}",
                named.join(", ")
            ))
        }
        other => other.into(),
    })?;
    let mut settings = AdmmSettings {
        delta: args.delta,
        max_iters: args.max_iters,
        ..AdmmSettings::default()
    };
    settings.validate().map_err(|e| CliError::config(e.to_string()))?;

    let (lambda, cv) = match args.lambda {
        LambdaChoice::Fixed(l) => (l, None),
        LambdaChoice::Cv => {
            let rule = if args.one_se { SelectionRule::OneSe } else { SelectionRule::Min };
            let (result, summary) = cross_validate(&data, estimator, &sample, args, &settings, rule)?;
            (result.selected(rule), Some(summary))
        }
    };
    settings.lambda = lambda;
    let fit = solve(&sample, &settings)?;
    let edges = edge_list(&fit.sparse, ZERO_TOL);

    std::fs::create_dir_all(&args.out).map_err(|e| write_failed(&args.out, e))?;
    let names = data.names();
    write_to(&args.out.join("matrix.csv"), |f| write_matrix(&fit.solution, names, f))?;
    write_to(&args.out.join("sparse.csv"), |f| write_matrix(&fit.sparse, names, f))?;
    write_to(&args.out.join("edges.csv"), |f| write_edges(&edges, names, f))?;
    if let Some(cv) = &cv {
        write_to(&args.out.join("cv.csv"), |f| write_cv(cv, f))?;
    }

    let manifest = Manifest {
        tool: "repcov".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        input: args.input.display().to_string(),
        variables: names.to_vec(),
        design: design_summary(&data),
        estimator: args.sample,
        mode: args.scale,
        lambda_choice: args.lambda,
        lambda,
        delta: fit.delta,
        settings,
        seed: args.seed,
        cv,
        iterations: fit.iterations,
        primal_residual: fit.primal_residual,
        dual_residual: fit.dual_residual,
        min_eigenvalue: fit.min_eigenvalue,
        used_fast_path: fit.used_fast_path,
        final_rho: fit.final_rho,
        edges: edges.len(),
    };
    let path = args.out.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, json + "\n").map_err(|e| write_failed(&path, e))?;
    Ok(manifest)
}

fn cross_validate(
    data: &RepeatedData,
    estimator: EstimatorKind,
    sample: &repcov::SymMatrix,
    args: &EstimateArgs,
    settings: &AdmmSettings,
    rule: SelectionRule,
) -> Result<(CvResult, CvSummary), CliError> {
    let grid = lambda_grid(sample, args.grid_length).map_err(|e| CliError::config(format!("--grid-length: {e}")))?;
    let mut config = CvConfig::new(estimator, grid, args.seed);
    config.k_folds = args.k_folds;
    let result = kfold_cv(data, &config, settings)?;
    let summary = CvSummary {
        k_folds: args.k_folds,
        seed: args.seed,
        rule,
        grid: result.lambdas.clone(),
        mean_errors: result.mean_errors.clone(),
        standard_errors: result.standard_errors.clone(),
        selected_index: match rule {
            SelectionRule::Min => result.selected_min,
            SelectionRule::OneSe => result.selected_one_se,
        },
        unconverged_fits: result.unconverged_fits,
    };
    Ok((result, summary))
}

fn write_cv(cv: &CvSummary, out: File) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lambda", "cv_error", "cv_se", "selected"])?;
    for (l, lam) in cv.grid.iter().enumerate() {
        w.write_record([
            lam.to_string(),
            cv.mean_errors[l].to_string(),
            cv.standard_errors[l].to_string(),
            (l == cv.selected_index).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn write_to<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(File) -> csv::Result<()>,
{
    let file = File::create(path).map_err(|e| write_failed(path, e))?;
    f(file).map_err(|e| write_failed(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_parses() {
        assert_eq!("cv".parse::<LambdaChoice>().unwrap(), LambdaChoice::Cv);
        assert_eq!("CV".parse::<LambdaChoice>().unwrap(), LambdaChoice::Cv);
        assert_eq!("0.25".parse::<LambdaChoice>().unwrap(), LambdaChoice::Fixed(0.25));
        assert!("-1".parse::<LambdaChoice>().is_err());
        assert!("abc".parse::<LambdaChoice>().is_err());
        assert!("inf".parse::<LambdaChoice>().is_err());
    }
}
