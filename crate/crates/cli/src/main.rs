use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

mod benchmark;
mod invert;
mod simulate;
mod stack_file;
mod validate;

use invert::{GridSpec, MethodArg};

/// Single-look multi-master SAR tomography.
#[derive(Debug, Parser)]
#[command(name = "mmtomo", version)]
struct Cli {
    /// Worker threads for per-look parallelism (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic stack file and its truth sidecar from a JSON config.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Truth sidecar path (default: <out stem>.truth.json).
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Invert every look of a stack file.
    Invert {
        stack: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Elevation grid as `L,min,max` in metres.
        #[arg(long, allow_hyphen_values = true)]
        grid: GridSpec,
        #[arg(long, default_value_t = 11)]
        path_samples: usize,
        #[arg(long, default_value_t = 2)]
        max_order: usize,
        /// Refine selected scatterers off the grid.
        #[arg(long)]
        offgrid: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the ADMM acceleration variants on one single-master look.
    Benchmark {
        stack: PathBuf,
        #[arg(long)]
        look: u64,
        #[arg(long, allow_hyphen_values = true)]
        grid: GridSpec,
        /// Regularization weight (default: 0.1 ‖A^H g‖∞).
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 1_000_000)]
        max_iter: usize,
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration objective trace (default: <out stem>.trace.csv).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Height-error statistics of a results file against a truth sidecar.
    Validate {
        results: PathBuf,
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(jobs) = cli.jobs {
        anyhow::ensure!(jobs >= 1, "--jobs must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    match cli.command {
        Command::Simulate { config, out, truth } => simulate::run(&config, &out, truth.as_deref())?,
        Command::Invert { stack, method, grid, path_samples, max_order, offgrid, out } => {
            let failures = invert::run(&invert::InvertArgs { stack: &stack, method, grid, path_samples, max_order, offgrid, out: &out })?;
            if failures > 0 {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Benchmark { stack, look, grid, lambda, tol, max_iter, out, trace } => {
            let trace = trace.unwrap_or_else(|| {
                let mut name = out.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
                name.push(".trace.csv");
                out.with_file_name(name)
            });
            benchmark::run(&benchmark::BenchmarkArgs { stack: &stack, look, grid, lambda, tol, max_iter, out: &out, trace: &trace })?
        }
        Command::Validate { results, truth, out } => validate::run(&results, &truth, &out)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
