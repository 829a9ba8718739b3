//! `repcov simulate`: run a study (or a sweep of studies) described by a
//! TOML or JSON file and write plot-ready CSVs.
//!
//! ```toml
//! [study]
//! model = "M1"            # M1 | M2 | M3 | M4
//! p = 100
//! m = 100
//! replicates = 25
//! seed = 7
//! snr_a = 1.0             # M3/M4 only
//! curves = 0              # leading replicates that keep CV curves + ROC samples
//! roc_grid_length = 50
//! group_sizes = { scheme = "imbalance", a = 4, total = 1000 }
//! cv = { k_folds = 5, grid_length = 20, rule = "min" }
//!
//! [[estimators]]
//! sample = "between"      # within | between | anova | aggregated
//! scale = "cov"           # cov | cor, default cov
//! target = "between"      # default: within for "within", between otherwise
//!
//! [sweep]                 # optional, exactly one key
//! imbalance_a = [3, 4, 5]
//!
//! [solver]                # optional
//! delta = 1e-4
//! ```

use std::fs::File;
use std::path::{Path, PathBuf};

use repcov::simulate::{
    run_study, write_cv_curves_csv, write_roc_csv, write_summary_csv, Evaluation, StudyConfig, StudyReport, Sweep,
    Target,
};
use repcov::solver::AdmmSettings;
use repcov::tuning::{EstimatorKind, Scale};
use repcov::SampleKind;
use serde::{Deserialize, Serialize};

use crate::{write_failed, CliError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    pub sample: SampleKind,
    #[serde(default)]
    pub scale: Scale,
    #[serde(default)]
    pub target: Option<Target>,
}

impl EstimatorSpec {
    pub fn evaluation(&self) -> Evaluation {
        let estimator = EstimatorKind {
            sample: self.sample,
            scale: self.scale,
        };
        Evaluation {
            estimator,
            target: self.target.unwrap_or(Target::natural(self.sample)),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub delta: Option<f64>,
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationFile {
    pub study: StudyConfig,
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub solver: SolverSpec,
}

impl SimulationFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
        }
    }

    pub fn settings(&self) -> Result<AdmmSettings, CliError> {
        let mut s = AdmmSettings::default();
        s.delta = self.solver.delta;
        if let Some(it) = self.solver.max_iters {
            s.max_iters = it;
        }
        s.validate().map_err(|e| CliError::config(format!("solver: {e}")))?;
        Ok(s)
    }

    /// One config per setting; validation errors name the offending field.
    pub fn settings_list(&self) -> Result<Vec<StudyConfig>, CliError> {
        if self.estimators.is_empty() {
            return Err(CliError::config("estimators: at least one is required"));
        }
        let configs = match &self.sweep {
            None => vec![self.study.clone()],
            Some(s) => s.expand(&self.study).map_err(|e| CliError::config(e.to_string()))?,
        };
        for (i, c) in configs.iter().enumerate() {
            c.validate().map_err(|e| {
                let msg = e.to_string();
                let field = msg.strip_prefix("invalid parameter: ").unwrap_or(&msg);
                if self.sweep.is_some() {
                    CliError::config(format!("sweep setting {i}: study.{field}"))
                } else {
                    CliError::config(format!("study.{field}"))
                }
            })?;
        }
        Ok(configs)
    }
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub config: PathBuf,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
struct RunManifest<'a> {
    tool: &'a str,
    version: &'a str,
    config: &'a SimulationFile,
    settings: Vec<SettingOutcome>,
}

#[derive(Debug, Clone, Serialize)]
struct SettingOutcome {
    model: String,
    m: usize,
    total: usize,
    imbalance: f64,
    snr_a: f64,
    replicates_completed: usize,
    failures: Vec<(usize, String)>,
}

/// Runs every setting, then writes `summary.csv`, `comparison.csv`,
/// `cv_curves.csv`, `roc.csv` and `manifest.json` into `out`.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<Vec<StudyReport>, CliError> {
    let file = SimulationFile::load(&args.config)?;
    let configs = file.settings_list()?;
    let settings = file.settings()?;
    let evaluations: Vec<Evaluation> = file.estimators.iter().map(EstimatorSpec::evaluation).collect();

    let reports = configs
        .iter()
        .map(|c| run_study(c, &evaluations, &settings))
        .collect::<Result<Vec<_>, _>>()?;

    // All output happens here, after every setting has finished.
    let out = &args.out;
    std::fs::create_dir_all(out).map_err(|e| write_failed(out, e))?;
    write_core(&out.join("summary.csv"), |f| write_summary_csv(&reports, f))?;
    write_core(&out.join("cv_curves.csv"), |f| write_cv_curves_csv(&reports, f))?;
    write_core(&out.join("roc.csv"), |f| write_roc_csv(&reports, f))?;
    crate::estimate::write_to(&out.join("comparison.csv"), |f| write_comparison(&reports, f))?;

    let manifest = RunManifest {
        tool: "repcov",
        version: env!("CARGO_PKG_VERSION"),
        config: &file,
        settings: reports
            .iter()
            .map(|r| SettingOutcome {
                model: format!("{:?}", r.config.model),
                m: r.design.m,
                total: r.design.total,
                imbalance: r.design.imbalance,
                snr_a: r.config.snr_a,
                replicates_completed: r.completed,
                failures: r.failures().into_iter().map(|(i, e)| (i, e.to_string())).collect(),
            })
            .collect(),
    };
    let path = out.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, json + "\n").map_err(|e| write_failed(&path, e))?;
    Ok(reports)
}

fn write_core<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(File) -> repcov::Result<()>,
{
    let file = File::create(path).map_err(|e| write_failed(path, e))?;
    f(file).map_err(|e| write_failed(path, e))
}

const COMPARISON_METRICS: [&str; 9] = [
    "frobenius",
    "spectral",
    "pd_percent",
    "unconstrained_frobenius",
    "unconstrained_spectral",
    "unconstrained_pd_percent",
    "sample_frobenius",
    "tpr",
    "fpr",
];

/// Wide table: one row per setting × evaluation, mean and SE of the
/// constrained fit next to the soft-thresholded one at the same λ.
fn write_comparison(reports: &[StudyReport], out: File) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["model", "p", "m", "total", "imbalance", "snr_a", "completed", "estimator", "target"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for m in COMPARISON_METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_se"));
    }
    w.write_record(&header)?;
    for r in reports {
        for ev in &r.evaluations {
            let mut rec = vec![
                format!("{:?}", r.config.model),
                r.config.p.to_string(),
                r.design.m.to_string(),
                r.design.total.to_string(),
                r.design.imbalance.to_string(),
                r.config.snr_a.to_string(),
                r.completed.to_string(),
                ev.estimator.label(),
                format!("{:?}", ev.target).to_lowercase(),
            ];
            for m in COMPARISON_METRICS {
                match r.metric(ev, m) {
                    Some(s) => {
                        rec.push(s.mean.to_string());
                        rec.push(s.se.to_string());
                    }
                    None => rec.extend([String::new(), String::new()]),
                }
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[study]
model = "M2"
p = 5
m = 10
replicates = 2
seed = 3
group_sizes = { scheme = "balanced", n = 2 }

[[estimators]]
sample = "between"
"#;

    fn parse(text: &str) -> Result<SimulationFile, toml::de::Error> {
        toml::from_str(text)
    }

    #[test]
    fn minimal_file_parses() {
        let f = parse(BASE).unwrap();
        assert_eq!(f.study.cv.k_folds, 5);
        assert_eq!(f.estimators[0].evaluation().target, Target::Between);
        assert_eq!(f.settings_list().unwrap().len(), 1);
    }

    #[test]
    fn zero_replicates_named() {
        let f = parse(&BASE.replace("replicates = 2", "replicates = 0")).unwrap();
        let e = f.settings_list().unwrap_err();
        assert_eq!(e.failure, crate::Failure::Config);
        assert!(e.message.contains("study.replicates"), "{}", e.message);
    }

    #[test]
    fn unknown_field_rejected() {
        let e = parse(&BASE.replace("seed = 3", "seed = 3\nreplicate = 4")).unwrap_err();
        assert!(e.to_string().contains("replicate"));
    }

    #[test]
    fn sweep_expands() {
        let text = BASE.replace("scheme = \"balanced\", n = 2", "scheme = \"imbalance\", a = 2, total = 40")
            + "\n[sweep]\nimbalance_a = [2, 3]\n";
        let f = parse(&text).unwrap();
        let list = f.settings_list().unwrap();
        assert_eq!(list.len(), 2);
        assert_eq!(list[1].sizes().unwrap()[0], 3);
    }
}
