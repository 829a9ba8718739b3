use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use repcov::simulate::{replicate_rng, Model, Sampler};
use repcov::solver::psd_floor_projection;
use repcov::tuning::{kfold_cv, lambda_grid, CvConfig, EstimatorKind};
use repcov::*;
use repcov_cli::output::read_matrix;
use repcov_cli::{export, ingest_path, Manifest};
use tempfile::TempDir;

fn repcov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repcov")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Draws a Model 1 dataset with the given group sizes and writes it as CSV.
fn synthetic_csv(dir: &Path, p: usize, sizes: &[usize], seed: u64) -> (PathBuf, RepeatedData) {
    let (tb, te) = Model::M1.templates(p, 1.0);
    let sb = repcov::simulate::build_template(&tb).unwrap();
    let se = repcov::simulate::build_template(&te).unwrap();
    let data = Sampler::new(&sb, &se).unwrap().draw(sizes, &mut replicate_rng(seed, 0)).unwrap();
    let path = dir.join("data.csv");
    export(&data, fs::File::create(&path).unwrap()).unwrap();
    (path, data)
}

fn matrix(path: &Path) -> Vec<Vec<f64>> {
    read_matrix(fs::File::open(path).unwrap()).unwrap().1
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn lambda_zero_within_is_the_floor_projection() {
    let tmp = TempDir::new().unwrap();
    let (csv, _) = synthetic_csv(tmp.path(), 6, &[3; 12], 1);
    let out = tmp.path().join("out");
    let o = repcov(&["estimate", path_str(&csv), "--estimator", "within", "--lambda", "0", "--out", path_str(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    // The library sees exactly what the CLI read.
    let data = ingest_path(&csv).unwrap();
    let m = manifest(&out);
    let want = psd_floor_projection(&within_sample(&data).unwrap(), m.delta).unwrap();
    let got = matrix(&out.join("matrix.csv"));
    for (i, row) in got.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert!((v - want.get(i, j)).abs() <= 1e-12, "({i},{j}) {v} vs {}", want.get(i, j));
        }
    }
    assert_eq!(m.lambda, 0.0);
    assert!(m.cv.is_none());
    assert!(!out.join("cv.csv").exists());
}

#[test]
fn correlation_mode_reports_negative_diagonals() {
    let tmp = TempDir::new().unwrap();
    // Identical subject means for v2 with large spread inside subjects:
    // the corrected between-subject variance of v2 is negative.
    let csv = tmp.path().join("neg.csv");
    fs::write(
        &csv,
        "subject_id,v1,v2\na,1.0,10\na,2.0,-10\nb,3.5,9\nb,0.5,-9\nc,-1.0,11\nc,0.0,-11\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = repcov(&["estimate", path_str(&csv), "--mode", "cor", "--lambda", "0.1", "--out", path_str(&out)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("v2 (column 2)"), "{}", stderr(&o));
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn one_se_selection_matches_the_library() {
    let tmp = TempDir::new().unwrap();
    let (csv, _) = synthetic_csv(tmp.path(), 8, &[2, 3, 4, 5, 2, 3, 4, 5, 2, 3, 4, 5, 3, 3], 2);
    let out = tmp.path().join("out");
    let o = repcov(&[
        "estimate", path_str(&csv), "--estimator", "anova", "--lambda", "cv", "--one-se", "--seed", "17",
        "--out", path_str(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let data = ingest_path(&csv).unwrap();
    let kind = EstimatorKind::covariance(SampleKind::Anova);
    let grid = lambda_grid(&kind.sample_estimate(&data).unwrap(), 20).unwrap();
    let cv = kfold_cv(&data, &CvConfig::new(kind, grid, 17), &AdmmSettings::default()).unwrap();
    let m = manifest(&out);
    assert_eq!(m.lambda, cv.lambda_one_se());
    let summary = m.cv.unwrap();
    assert_eq!(summary.selected_index, cv.selected_one_se);
    assert_eq!(summary.mean_errors, cv.mean_errors);
    let curve = fs::read_to_string(out.join("cv.csv")).unwrap();
    assert_eq!(curve.lines().count(), 21);
}

#[test]
fn export_ingest_round_trip() {
    let tmp = TempDir::new().unwrap();
    let (csv, data) = synthetic_csv(tmp.path(), 4, &[1, 2, 3, 4], 3);
    let back = ingest_path(&csv).unwrap();
    assert_eq!(back.group_sizes(), data.group_sizes());
    for (a, b) in back.subjects().iter().zip(data.subjects()) {
        assert_eq!(a.observations(), b.observations());
    }
}

#[test]
fn reruns_are_bit_identical() {
    let tmp = TempDir::new().unwrap();
    let (csv, _) = synthetic_csv(tmp.path(), 6, &[3; 10], 4);
    let outs: Vec<PathBuf> = (0..2).map(|i| tmp.path().join(format!("out{i}"))).collect();
    for out in &outs {
        let o = repcov(&["estimate", path_str(&csv), "--seed", "9", "--out", path_str(out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["matrix.csv", "sparse.csv", "edges.csv", "cv.csv", "manifest.json"] {
        assert_eq!(fs::read(outs[0].join(f)).unwrap(), fs::read(outs[1].join(f)).unwrap(), "{f}");
    }
}

const SMALL_STUDY: &str = r#"
[study]
model = "M2"
p = 5
m = 12
replicates = 3
seed = 11
curves = 1
group_sizes = { scheme = "balanced", n = 3 }
cv = { k_folds = 3, grid_length = 6, rule = "min" }

[[estimators]]
sample = "between"

[[estimators]]
sample = "aggregated"
target = "between"
"#;

#[test]
fn simulate_writes_reproducible_tables() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("study.toml");
    fs::write(&cfg, SMALL_STUDY).unwrap();
    let outs: Vec<PathBuf> = (0..2).map(|i| tmp.path().join(format!("sim{i}"))).collect();
    for out in &outs {
        let o = repcov(&["simulate", path_str(&cfg), "--out", path_str(out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["summary.csv", "comparison.csv", "cv_curves.csv", "roc.csv", "manifest.json"] {
        assert_eq!(fs::read(outs[0].join(f)).unwrap(), fs::read(outs[1].join(f)).unwrap(), "{f}");
    }
    let summary = fs::read_to_string(outs[0].join("summary.csv")).unwrap();
    assert!(summary.lines().skip(1).any(|l| l.contains("aggregated")));
}

#[test]
fn simulate_rejects_zero_replicates() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("study.toml");
    fs::write(&cfg, SMALL_STUDY.replace("replicates = 3", "replicates = 0")).unwrap();
    let o = repcov(&["simulate", path_str(&cfg), "--out", path_str(&tmp.path().join("x"))]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("replicates"), "{}", stderr(&o));
}

#[test]
fn simulate_rejects_unknown_keys() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("study.toml");
    fs::write(&cfg, SMALL_STUDY.replace("seed = 11", "seed = 11\nsede = 3")).unwrap();
    let o = repcov(&["simulate", path_str(&cfg), "--out", path_str(&tmp.path().join("x"))]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn input_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let missing = repcov(&["estimate", path_str(&tmp.path().join("nope.csv")), "--out", path_str(&out)]);
    assert_eq!(code(&missing), 2);

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "subject_id,v1,v2\na,1,2\na,3,NaN\nb,1,1\n").unwrap();
    let o = repcov(&["estimate", path_str(&bad), "--lambda", "0", "--out", path_str(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_four() {
    let tmp = TempDir::new().unwrap();
    let (csv, _) = synthetic_csv(tmp.path(), 3, &[2; 6], 5);
    let out = tmp.path().join("out");
    for args in [
        vec!["estimate", path_str(&csv), "--lambda", "-1", "--out", path_str(&out)],
        vec!["estimate", path_str(&csv), "--kfolds", "1", "--out", path_str(&out)],
        vec!["estimate", path_str(&csv), "--delta", "0", "--out", path_str(&out)],
        vec!["estimate", path_str(&csv), "--estimator", "bogus", "--out", path_str(&out)],
    ] {
        let o = repcov(&args);
        assert_eq!(code(&o), 4, "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn iteration_cap_is_a_solver_failure() {
    let tmp = TempDir::new().unwrap();
    // Few subjects, many variables: the corrected between estimate is indefinite.
    let (csv, _) = synthetic_csv(tmp.path(), 8, &[2; 4], 6);
    let out = tmp.path().join("out");
    let o = repcov(&["estimate", path_str(&csv), "--lambda", "0.01", "--max-iters", "1", "--out", path_str(&out)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

/// End-to-end run on a clinic-shaped design: unequal visit counts with
/// imbalance near 2.5, both between-subject estimators, λ by CV.
#[test]
fn imbalanced_workflow() {
    let tmp = TempDir::new().unwrap();
    let mut sizes = vec![4; 37];
    sizes.extend([12; 3]);
    let (csv, _) = synthetic_csv(tmp.path(), 10, &sizes, 7);
    for est in ["between", "anova"] {
        let out = tmp.path().join(est);
        let o = repcov(&["estimate", path_str(&csv), "--estimator", est, "--out", path_str(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let m = manifest(&out);
        assert!((2.3..2.8).contains(&m.design.imbalance), "{}", m.design.imbalance);
        assert!(m.min_eigenvalue >= m.delta - 1e-8);
        assert_eq!(m.variables.len(), 10);

        let sparse = matrix(&out.join("sparse.csv"));
        let nonzero = (0..10).flat_map(|i| (i + 1..10).map(move |j| (i, j))).filter(|&(i, j)| sparse[i][j] != 0.0).count();
        let edges = fs::read_to_string(out.join("edges.csv")).unwrap();
        assert_eq!(edges.lines().count() - 1, nonzero);
        assert_eq!(m.edges, nonzero);

        let dense = matrix(&out.join("matrix.csv"));
        let sym = SymMatrix::from_rows(&dense).unwrap();
        assert!(sym.min_eigenvalue().unwrap() >= m.delta - 1e-8);
    }
}
