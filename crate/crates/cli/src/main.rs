use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use repcov::tuning::Scale;
use repcov::SampleKind;
use repcov_cli::{cmd_estimate, cmd_simulate, CliError, EstimateArgs, LambdaChoice, SimulateArgs};

/// Sparse positive-definite within- and between-subject covariance estimation.
///
/// Exit codes: 0 ok, 2 input error, 3 solver failure, 4 config error.
#[derive(Parser)]
#[command(name = "repcov", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one estimator to a long-format CSV (subject_id,v1,...,vp).
    Estimate {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = EstimatorArg::Between)]
        estimator: EstimatorArg,
        #[arg(long, value_enum, default_value_t = ModeArg::Cov)]
        mode: ModeArg,
        /// A nonnegative number, or "cv" for K-fold cross-validation.
        #[arg(long, default_value = "cv")]
        lambda: LambdaChoice,
        /// Eigenvalue floor; default 1e-4 · max(max diagonal, 1).
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 5)]
        kfolds: usize,
        /// Pick the largest λ within one standard error of the CV minimum.
        #[arg(long)]
        one_se: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        grid_length: usize,
        #[arg(long, default_value_t = 10_000)]
        max_iters: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a simulation study from a TOML or JSON config file.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Within,
    Between,
    Anova,
    Aggregated,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Cov,
    Cor,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Estimate {
            input,
            estimator,
            mode,
            lambda,
            delta,
            kfolds,
            one_se,
            seed,
            grid_length,
            max_iters,
            out,
        } => {
            let args = EstimateArgs {
                sample: match estimator {
                    EstimatorArg::Within => SampleKind::Within,
                    EstimatorArg::Between => SampleKind::Between,
                    EstimatorArg::Anova => SampleKind::Anova,
                    EstimatorArg::Aggregated => SampleKind::Aggregated,
                },
                scale: match mode {
                    ModeArg::Cov => Scale::Covariance,
                    ModeArg::Cor => Scale::Correlation,
                },
                lambda,
                delta,
                k_folds: kfolds,
                grid_length,
                one_se,
                seed,
                max_iters,
                ..EstimateArgs::new(input, out)
            };
            let m = cmd_estimate(&args)?;
            println!(
                "lambda {} delta {} edges {} min eigenvalue {} ({})",
                m.lambda,
                m.delta,
                m.edges,
                m.min_eigenvalue,
                if m.used_fast_path { "fast path".to_string() } else { format!("{} iterations", m.iterations) }
            );
        }
        Command::Simulate { config, out } => {
            let reports = cmd_simulate(&SimulateArgs { config, out: out.clone() })?;
            for r in &reports {
                println!(
                    "{:?} m={} N={} imbalance={} snr_a={}: {}/{} replicates completed",
                    r.config.model, r.design.m, r.design.total, r.design.imbalance, r.config.snr_a, r.completed,
                    r.config.replicates
                );
            }
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
