use bmvd::cli::{run, RunContext};
use bmvd::error::Error;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Numerical laboratory for Brownian motion with scalar drift on a space
/// of varying dimension.
#[derive(Parser)]
#[command(name = "bmvd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to the available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Path simulation and empirical densities.
    Simulate,
    /// Deterministic kernel tables from the 1-D transmission solver.
    Pde,
    /// Perturbation series, diagnostics and the resolvent identity.
    Duhamel,
    /// Two-sided envelope fits and the convolution-inequality battery.
    VerifyBounds,
    /// Green columns and the three-case comparison report.
    Green,
    /// Aggregates the JSON artifacts in the output directory.
    Report,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Pde => "pde",
            Command::Duhamel => "duhamel",
            Command::VerifyBounds => "verify-bounds",
            Command::Green => "green",
            Command::Report => "report",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        // reproducibility does not depend on the worker count; this only
        // sizes the pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    let ctx = RunContext {
        out_dir: cli.out.clone(),
        seed: cli.seed,
    };
    match run(cli.command.name(), cli.config.as_deref(), &ctx) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = match &err {
                Error::Config(_) => "config",
                Error::Geometry(_) => "geometry",
                Error::Grid(_) | Error::Solve(_) => "solver",
                Error::Sim(_) => "simulation",
                Error::Fit(_) => "fit",
                Error::Series(_) => "series",
                Error::Io(_) => "io",
            };
            eprintln!(
                "{}",
                serde_json::json!({"error": {"kind": kind, "message": err.to_string()}})
            );
            if matches!(err, Error::Config(_)) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
