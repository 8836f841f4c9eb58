use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rpmfft_cli::commands::{self, RunOptions};
use rpmfft_cli::config::ExperimentConfig;
use rpmfft_cli::exit_code;

/// FFT homogenization experiments with optional RPM stabilization.
///
/// Exit status: 0 all runs converged, 1 runtime error, 2 config error,
/// 3 some runs did not converge, 4 no run converged.
#[derive(Parser, Debug)]
#[command(name = "rpmfft", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the configured cell with each listed solver.
    Solve(Common),
    /// Sweep contrast (and optionally resolution, radius, n_max).
    SweepContrast(Common),
    /// Sweep the reference modulus.
    SweepReference(Common),
    /// Run several solvers on one cell and compare their fields.
    Compare(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Concurrent solves.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Overrides the configured tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
    /// No per-run progress on stderr.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (run, common): (fn(ExperimentConfig, &RunOptions) -> _, Common) = match cli.command {
        Command::Solve(c) => (commands::solve, c),
        Command::SweepContrast(c) => (commands::sweep_contrast, c),
        Command::SweepReference(c) => (commands::sweep_reference, c),
        Command::Compare(c) => (commands::compare, c),
    };
    let opts = RunOptions {
        out: common.out,
        workers: common.workers,
        tolerance: common.tolerance,
        quiet: common.quiet,
    };
    let result = ExperimentConfig::load(&common.config)
        .map_err(commands::CliError::from)
        .and_then(|cfg| run(cfg, &opts));
    match &result {
        Ok(s) => eprintln!(
            "{}/{} runs converged; output in {}",
            s.converged,
            s.runs,
            s.out_dir.display()
        ),
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
