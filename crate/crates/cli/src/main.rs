use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gpebo_lab::{check_pe, error_code, plot, run, Overrides};

#[derive(Parser)]
#[command(
    name = "gpebo-lab",
    version,
    about = "Adaptive state observer for LTV plants: simulate, check excitation, plot"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate plant, filters and estimator; write CSV, JSON report and plots.
    ///
    /// Exit codes: 0 healthy, 1 assumption monitors or regression identity
    /// failed, 2 invalid input, 3 numeric divergence.
    Run {
        /// Scenario JSON file(s); several files run in parallel with --jobs.
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        /// Override the integration step in seconds.
        #[arg(long)]
        dt: Option<f64>,
        /// Override the horizon in seconds.
        #[arg(long)]
        t_final: Option<f64>,
        /// Output directory.
        #[arg(long, env = "GPEBO_LAB_OUT", default_value = "out")]
        out: PathBuf,
        /// Worker threads when several scenarios are given.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Windowed Gram eigenvalues of the regressor (plant and filters only).
    ///
    /// Exit codes: 0 if every window has lambda_min > 0, 1 otherwise,
    /// 2 invalid input or no complete window, 3 numeric divergence.
    CheckPe {
        scenario: PathBuf,
        /// Window length in seconds.
        #[arg(long)]
        delta: f64,
        /// Spacing of window starts in seconds (default: delta).
        #[arg(long)]
        stride: Option<f64>,
    },
    /// Render SVG figures from a CSV written by `run`.
    Plot {
        csv: PathBuf,
        /// Output directory (default: the CSV's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut stdout = std::io::stdout();
    let result = match cli.command {
        Command::Run {
            scenarios,
            dt,
            t_final,
            out,
            jobs,
        } => run(&scenarios, Overrides { dt, t_final }, &out, jobs),
        Command::CheckPe {
            scenario,
            delta,
            stride,
        } => check_pe(&scenario, delta, stride, &mut stdout),
        Command::Plot { csv, out } => plot(&csv, out.as_deref(), &mut stdout),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(error_code(&e))
        }
    }
}
