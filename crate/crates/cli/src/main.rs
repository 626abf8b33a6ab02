//! `complex-orbits`: integrate complex trajectories, trace quantized energy
//! curves and classify orbits from the command line.

mod commands;
mod complex;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use complex_orbits::dynamics::Branch;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "complex-orbits", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one trajectory and write it as CSV.
    Trajectory(TrajectoryArgs),
    /// Trace a quantized energy curve of the double well and its mirror image.
    TraceCurve(TraceArgs),
    /// Decide whether orbits from one or more starting points close.
    Classify(ClassifyArgs),
    /// Bisect between a periodic and an open starting point.
    Separatrix(SeparatrixArgs),
}

fn complex_arg(s: &str) -> Result<Complex64, String> {
    complex::parse_complex(s).map_err(|e| e.to_string())
}

fn branch_arg(s: &str) -> Result<Branch, String> {
    s.parse()
        .map_err(|_| format!("expected '+' or '-', found {s:?}"))
}

#[derive(Debug, Args)]
struct SystemArgs {
    /// Polynomial in x, e.g. "x^4 - 5x^2".
    #[arg(long)]
    potential: String,
    /// Complex energy: "a", "bi", "a+bi" or "a-bi".
    #[arg(long, value_parser = complex_arg, allow_hyphen_values = true)]
    energy: Complex64,
    /// Sign of the initial velocity sqrt(E - V(x0)).
    #[arg(long, default_value = "+", value_parser = branch_arg, allow_hyphen_values = true)]
    branch: Branch,
}

#[derive(Debug, Args)]
struct TrajectoryArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long, default_value = "0", value_parser = complex_arg, allow_hyphen_values = true)]
    x0: Complex64,
    #[arg(long, default_value_t = 20.0)]
    tmax: f64,
    /// Integrator tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Use the closed-form quartic solution (x^4 - 5x^2, x0 = 0 only).
    #[arg(long)]
    exact: bool,
    /// Time step for --exact output.
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Largest gap between consecutive numerical samples.
    #[arg(long, default_value_t = complex_orbits::dynamics::DEFAULT_SAMPLE_SPACING)]
    spacing: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TraceArgs {
    #[arg(long)]
    n: i64,
    #[arg(long)]
    m: i64,
    #[arg(long, default_value_t = 3.0)]
    max_radius: f64,
    /// Largest distance between consecutive curve points.
    #[arg(long, default_value_t = 0.02)]
    step: f64,
    /// CSV for the upper branch; the mirror branch goes to <stem>_conj.csv.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct ClassifyOptions {
    /// Integration horizon in time units.
    #[arg(long, default_value_t = 60.0)]
    horizon: f64,
    /// Phase-space distance that counts as a return to the start.
    #[arg(long, default_value_t = complex_orbits::classify::DEFAULT_CLOSURE_TOL)]
    closure_tol: f64,
    /// Integrator tolerance.
    #[arg(long, default_value_t = 1e-11)]
    tol: f64,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// Starting point; repeat to classify several.
    #[arg(long, default_value = "0", value_parser = complex_arg, allow_hyphen_values = true, num_args = 1)]
    x0: Vec<Complex64>,
    #[command(flatten)]
    options: ClassifyOptions,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write the records here (plus a manifest) instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SeparatrixArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// Endpoint expected to give a periodic orbit.
    #[arg(long, value_parser = complex_arg, allow_hyphen_values = true)]
    from: Complex64,
    /// Endpoint expected to give an open orbit.
    #[arg(long, value_parser = complex_arg, allow_hyphen_values = true)]
    to: Complex64,
    /// Stop once the bracket is shorter than this.
    #[arg(long, default_value_t = 1e-3)]
    bisect_tol: f64,
    #[command(flatten)]
    options: ClassifyOptions,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0:#}")]
    Usage(anyhow::Error),
    #[error("{0:#}")]
    Numerical(anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

/// Anything not explicitly classified is an I/O or internal failure and
/// reported as numerical.
impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Numerical(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Trajectory(args) => commands::trajectory(args),
        Command::TraceCurve(args) => commands::trace_curve(args),
        Command::Classify(args) => commands::classify(args),
        Command::Separatrix(args) => commands::separatrix(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
