//! Command line front end for the robust-PCA synthetic control pipeline.
//!
//! Exit codes: 0 success, 1 validation error (bad data or configuration),
//! 2 numerical failure, 64 usage error.

use clap::{Args, Parser, Subcommand};

mod config;
mod run;

#[derive(Parser)]
#[command(
    name = "rpca-synth",
    version,
    about = "Synthetic control estimation with robust-PCA denoising",
    after_help = "Every run writes plot-ready CSV files plus a summary.json into --out.\n\
                  Flags omitted on the command line fall back to --config, then to defaults."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the counterfactual trajectory of a treated unit
    Fit(FitArgs),
    /// Backdate the intervention inside the pre-period and refit
    PlaceboTime(PlaceboTimeArgs),
    /// Rerun the pipeline with each control unit cast as the treated one
    PlaceboSpace(FitArgs),
    /// Refit once per positive-weight donor with that donor removed
    Loo(FitArgs),
    /// Run the synthetic two-process recovery study
    Simulate(SimulateArgs),
    /// Export the smoothed mean, eigenfunctions, and scree table
    FpcaReport(FpcaReportArgs),
    /// Singular value spectrum of the loaded panel matrix
    Spectrum(SpectrumArgs),
}

#[derive(Args, Clone, Default)]
struct InputArgs {
    /// Panel CSV file
    #[arg(long)]
    input: Option<String>,
    /// Input layout: "wide" (one row per unit) or "long" (unit,time,value)
    #[arg(long)]
    layout: Option<String>,
    /// Flat key=value configuration file; flags override it
    #[arg(long)]
    config: Option<String>,
    /// Output directory (default "out")
    #[arg(long)]
    out: Option<String>,
    /// Worker threads for placebo/leave-one-out/study runs (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct TreatArgs {
    /// Label of the treated unit
    #[arg(long)]
    treated: Option<String>,
    /// Time label of the last pre-intervention period
    #[arg(long)]
    t0: Option<f64>,
}

#[derive(Args, Clone, Default)]
struct SmoothArgs {
    /// Smoothing kernel: "epanechnikov" or "gaussian"
    #[arg(long)]
    kernel: Option<String>,
    /// Mean smoother bandwidth in time units (default: automatic)
    #[arg(long)]
    bandwidth_mean: Option<f64>,
    /// Covariance smoother bandwidth in time units (default: automatic)
    #[arg(long)]
    bandwidth_cov: Option<f64>,
    /// Evaluation grid size (default: observed times when regular, else 100)
    #[arg(long)]
    grid_size: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct PipelineArgs {
    #[command(flatten)]
    smooth: SmoothArgs,
    /// Cumulative explained-variance threshold for keeping components
    #[arg(long)]
    explained: Option<f64>,
    /// Smallest candidate cluster count
    #[arg(long)]
    k_min: Option<usize>,
    /// Largest candidate cluster count
    #[arg(long)]
    k_max: Option<usize>,
    /// K-means restarts per candidate k
    #[arg(long)]
    restarts: Option<usize>,
    /// Random seed
    #[arg(long)]
    seed: Option<u64>,
    /// Sparsity weight of the robust decomposition (default: automatic)
    #[arg(long)]
    lambda: Option<f64>,
    /// Penalty parameter of the robust decomposition (default: automatic)
    #[arg(long)]
    mu: Option<f64>,
    /// Stopping tolerance of the robust decomposition (default: automatic)
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap of the robust decomposition
    #[arg(long)]
    max_iter: Option<usize>,
    /// Dual start: "scaled" or "zero"
    #[arg(long)]
    dual_init: Option<String>,
}

#[derive(Args, Clone, Default)]
struct FitArgs {
    #[command(flatten)]
    io: InputArgs,
    #[command(flatten)]
    treat: TreatArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Clone)]
struct PlaceboTimeArgs {
    #[command(flatten)]
    fit: FitArgs,
    /// Pretend the intervention ended this period instead (a time label
    /// before --t0)
    #[arg(long)]
    fake_t0: Option<f64>,
}

#[derive(Args, Clone)]
struct SimulateArgs {
    /// Realizations of process 1 (the treated unit's process)
    #[arg(long)]
    n1: Option<usize>,
    /// Realizations of process 2
    #[arg(long)]
    n2: Option<usize>,
    /// Number of periods; times run 1..=t-max
    #[arg(long)]
    t_max: Option<usize>,
    /// Last pre-intervention time
    #[arg(long)]
    t0: Option<usize>,
    /// Noise variance; repeat for several study cells
    #[arg(long = "sigma2")]
    sigma2: Vec<f64>,
    /// Fraction of donor cells to mark missing
    #[arg(long)]
    missing: Option<f64>,
    /// Random seed
    #[arg(long)]
    seed: Option<u64>,
    /// Flat key=value configuration file; flags override it
    #[arg(long)]
    config: Option<String>,
    /// Output directory (default "out")
    #[arg(long)]
    out: Option<String>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Clone)]
struct FpcaReportArgs {
    #[command(flatten)]
    io: InputArgs,
    #[command(flatten)]
    treat: TreatArgs,
    #[command(flatten)]
    smooth: SmoothArgs,
}

#[derive(Args, Clone)]
struct SpectrumArgs {
    #[command(flatten)]
    io: InputArgs,
}

fn main() {
    std::process::exit(cli_main());
}

fn cli_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = e.print();
            return code;
        }
    };
    match run::dispatch(cli.command) {
        Ok(()) => 0,
        Err(run::CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run with --help for usage");
            64
        }
        Err(run::CliError::Lib(e)) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}
