//! `gspca` — group-sparse block PCA from the command line.
//!
//! Subcommands: `fit` a sparse decomposition of a CSV data matrix,
//! `variance` to audit the explained variance of given loadings, `sweep`
//! a single algorithm over the reduced sparsity parameter, `bench` to run
//! the synthetic benchmark, and `compare-groups` for the group-vs-scalar
//! comparison. Exit codes: 0 success, 1 usage error, 2 data error,
//! 3 numerical failure.

mod commands;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "gspca", version, about = "Group-sparse block PCA toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit group-sparse loadings to a data matrix
    Fit(FitArgs),
    /// Compute the explained-variance report for given loadings
    Variance(VarianceArgs),
    /// Sweep the reduced sparsity parameter for one algorithm
    Sweep(SweepArgs),
    /// Run the synthetic benchmark from a spec file
    Bench(BenchArgs),
    /// Run the benchmark with and without group information
    CompareGroups(CompareArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    /// simultaneous block solve
    Block,
    /// one loading at a time, deflating between steps
    Deflation,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MuArg {
    /// μ_j = 1/j (orders the components)
    Decreasing,
    /// μ_j = 1
    Uniform,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    /// left singular vectors of the data
    Svd,
    /// seeded random orthonormal block
    Random,
}

#[derive(Args)]
struct FitArgs {
    /// Data CSV (rows = samples, optional header)
    #[arg(long)]
    input: PathBuf,
    /// Group sizes as a JSON array; defaults to singleton groups
    #[arg(long)]
    groups: Option<PathBuf>,
    /// Number of components
    #[arg(short = 'm', long)]
    components: usize,
    /// Reduced sparsity parameter in [0, 1]
    #[arg(long, conflicts_with = "gammas")]
    lambda: Option<f64>,
    /// Explicit sparsity parameters, comma separated
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = AlgoArg::Block)]
    algo: AlgoArg,
    #[arg(long, value_enum, default_value_t = MuArg::Decreasing)]
    mu: MuArg,
    /// Relative stopping tolerance on the objective
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    #[arg(long, value_enum, default_value_t = InitArg::Svd)]
    init: InitArg,
    /// Seed for the random initialization
    #[arg(long, default_value_t = 17)]
    seed: u64,
    /// Subtract column means before fitting
    #[arg(long)]
    center: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct VarianceArgs {
    /// Data CSV
    #[arg(long)]
    data: PathBuf,
    /// Loadings CSV (|p| rows, m columns)
    #[arg(long)]
    loadings: PathBuf,
    #[arg(long)]
    groups: Option<PathBuf>,
    #[arg(long)]
    center: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    groups: Option<PathBuf>,
    #[arg(short = 'm', long)]
    components: usize,
    /// Grid as `start:end:step` or a comma-separated list
    #[arg(long, default_value = "0:1:0.05")]
    lambdas: String,
    #[arg(long, value_enum, default_value_t = AlgoArg::Block)]
    algo: AlgoArg,
    #[arg(long, value_enum, default_value_t = MuArg::Decreasing)]
    mu: MuArg,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    #[arg(long)]
    center: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment spec JSON
    #[arg(long)]
    spec: PathBuf,
    /// Thresholds for the ε-distinguishability tables
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1e-3, 1e-2])]
    epsilons: Vec<f64>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Fit(args) => commands::fit(args),
        Command::Variance(args) => commands::variance(args),
        Command::Sweep(args) => commands::sweep(args),
        Command::Bench(args) => commands::bench(args),
        Command::CompareGroups(args) => commands::compare_groups(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
