use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use otbench::harness::{
    emit_report, run_experiment, ExperimentConfig, ExperimentKind, HarnessError, ReportFormat,
    DATA_ROOT_ENV,
};

/// Benchmark dual-formulation estimators of the 1-Wasserstein distance
/// (weight clipping, gradient penalty, c-transform, (c,eps)-transform)
/// against exact and entropic transport solvers.
#[derive(Parser)]
#[command(name = "otbench", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train discriminators on minibatches, freeze them, then score fresh
    /// evaluation minibatches against ground-truth solvers.
    Approx(RunArgs),
    /// Train at several batch sizes on fixed 512-point measures and
    /// compare minibatch-wise against full-measure evaluation.
    Stability(RunArgs),
    /// Alternating generator/discriminator training on a toy target with
    /// per-iteration estimated and exact distances.
    ToyWgan(RunArgs),
    /// Exact-solver and entropic-solver self checks.
    OracleCheck(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Declarative TOML experiment config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; default `out/<experiment>`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Report formats, comma separated: csv, json, svg.
    #[arg(long, value_delimiter = ',', default_values = ["csv", "json", "svg"])]
    format: Vec<String>,
    /// Print the effective config as TOML and exit without running.
    #[arg(long)]
    print_config: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Approx(a) => (ExperimentKind::Approximation, a),
        Command::Stability(a) => (ExperimentKind::Stability, a),
        Command::ToyWgan(a) => (ExperimentKind::ToyWgan, a),
        Command::OracleCheck(a) => (ExperimentKind::OracleCheck, a),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn run(kind: ExperimentKind, args: &RunArgs) -> Result<(), HarnessError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let loaded = ExperimentConfig::load(path)?;
            if loaded.experiment != kind {
                return Err(HarnessError::Config(format!(
                    "config declares experiment `{}` but the `{}` subcommand was invoked",
                    loaded.experiment.name(),
                    kind.name()
                )));
            }
            loaded
        }
        None => ExperimentConfig::default_for(kind),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &args.out_dir {
        cfg.out_dir = Some(dir.clone());
    }
    let formats: Vec<ReportFormat> = args
        .format
        .iter()
        .map(|f| f.parse())
        .collect::<Result<_, _>>()?;

    if args.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    cfg.validate()?;

    eprintln!(
        "running `{}` with seed {} ({} data root: {})",
        kind.name(),
        cfg.seed,
        DATA_ROOT_ENV,
        std::env::var(DATA_ROOT_ENV).unwrap_or_else(|_| "unset".into()),
    );
    let report = run_experiment(&cfg)?;

    // Console summary.
    if !report.aggregates.is_empty() {
        eprintln!("method                     mean err     sd err   mean est");
        for a in &report.aggregates {
            eprintln!(
                "{:<24} {:>10.4} {:>10.4} {:>10.4}",
                a.method, a.mean_error, a.sd_error, a.mean_estimate
            );
        }
    }
    if !report.stability.is_empty() {
        eprintln!("method                    N_train  M_eval   estimate         sd");
        for c in &report.stability {
            eprintln!(
                "{:<24} {:>8} {:>7} {:>10.4} {:>10.4}",
                c.method, c.n_train, c.m_eval, c.mean_estimate, c.sd_estimate
            );
        }
    }
    for (key, value) in &report.extras {
        eprintln!("{key}: {value}");
    }
    eprintln!("wall time: {} ms", report.wall_ms_total);

    let out_dir = cfg
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(kind.name()));
    let written = emit_report(&report, &out_dir, &formats)?;
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}
