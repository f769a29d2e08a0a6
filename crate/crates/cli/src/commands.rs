//! Subcommand implementations and their exit codes.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::Context;
use gpebo_core::{check_excitation, execute, Scenario, ScenarioFile, StudyError};
use log::info;
use thiserror::Error;

use crate::csvlog::write_csv;
use crate::plot::plot_csv;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    /// Run completed but is unhealthy, or the regressor is not exciting.
    pub const UNHEALTHY: u8 = 1;
    pub const INVALID: u8 = 2;
    pub const DIVERGED: u8 = 3;
}

/// Failures that map to a specific exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Diverged(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => exit::INVALID,
            CliError::Diverged(_) => exit::DIVERGED,
        }
    }
}

/// Exit code for an error returned by a subcommand.
pub fn error_code(err: &anyhow::Error) -> u8 {
    err.downcast_ref::<CliError>().map_or(exit::INVALID, CliError::code)
}

impl From<StudyError> for CliError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Sim(ref s) if !s.is_divergence() => CliError::Invalid(e.to_string()),
            StudyError::Scan(_) => CliError::Invalid(e.to_string()),
            _ => CliError::Diverged(e.to_string()),
        }
    }
}

/// Command-line overrides of a scenario file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
}

pub fn load_scenario(path: &Path, overrides: Overrides) -> Result<Scenario, CliError> {
    let mut file = ScenarioFile::load(path).map_err(|e| CliError::Invalid(e.to_string()))?;
    if let Some(dt) = overrides.dt {
        file.sim.dt = dt;
    }
    if let Some(t) = overrides.t_final {
        file.sim.t_final = t;
    }
    file.into_scenario().map_err(|e| CliError::Invalid(e.to_string()))
}

/// Files written by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub csv: PathBuf,
    pub report: PathBuf,
    pub plots: Vec<PathBuf>,
    pub healthy: bool,
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

/// Runs one scenario, writing CSV, JSON report and optional plots into `out_dir`.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path, summary_to: &mut dyn Write) -> anyhow::Result<RunArtifacts> {
    let outcome = execute(scenario).map_err(CliError::from)?;
    create_dir(out_dir)?;
    let outputs = &scenario.outputs;
    let csv = out_dir.join(outputs.csv.clone().unwrap_or_else(|| format!("{}.csv", scenario.name)));
    let report = out_dir.join(
        outputs
            .report
            .clone()
            .unwrap_or_else(|| format!("{}_report.json", scenario.name)),
    );
    let file = fs::File::create(&csv).with_context(|| format!("cannot create {}", csv.display()))?;
    write_csv(BufWriter::new(file), &outcome, outputs.csv_every)
        .with_context(|| format!("cannot write {}", csv.display()))?;
    let json = serde_json::to_string_pretty(&outcome.summary)?;
    fs::write(&report, json + "\n").with_context(|| format!("cannot write {}", report.display()))?;
    let plots = if outputs.plots {
        plot_csv(&csv, out_dir)?
    } else {
        Vec::new()
    };
    write!(summary_to, "{}", outcome.summary)?;
    writeln!(summary_to, "  wrote {} and {}", csv.display(), report.display())?;
    if !plots.is_empty() {
        writeln!(summary_to, "  wrote {} plots into {}", plots.len(), out_dir.display())?;
    }
    Ok(RunArtifacts {
        csv,
        report,
        plots,
        healthy: outcome.summary.healthy(),
    })
}

/// Scenario index, run result and captured summary text.
type JobResult = (usize, anyhow::Result<RunArtifacts>, Vec<u8>);

fn run_code(result: &anyhow::Result<RunArtifacts>) -> u8 {
    match result {
        Ok(a) if a.healthy => exit::OK,
        Ok(_) => exit::UNHEALTHY,
        Err(e) => error_code(e),
    }
}

/// `run`: one scenario into `out_dir`, or several in parallel, each into
/// `out_dir/<scenario name>`. Returns the worst exit code.
pub fn run(paths: &[PathBuf], overrides: Overrides, out_dir: &Path, jobs: usize) -> anyhow::Result<u8> {
    let scenarios = paths
        .iter()
        .map(|p| load_scenario(p, overrides).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    if let [single] = scenarios.as_slice() {
        let result = run_scenario(single, out_dir, &mut std::io::stdout());
        let code = run_code(&result);
        result?;
        return Ok(code);
    }
    let mut seen = HashSet::new();
    if let Some(dup) = scenarios.iter().find(|s| !seen.insert(s.name.as_str())) {
        return Err(CliError::Invalid(format!("scenario name `{}` appears twice", dup.name)).into());
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<JobResult>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, scenarios.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(sc) = scenarios.get(i) else { break };
                info!("running scenario {}", sc.name);
                let mut text = Vec::new();
                let r = run_scenario(sc, &out_dir.join(&sc.name), &mut text);
                results.lock().expect("result lock").push((i, r, text));
            });
        }
    });
    let mut results = results.into_inner().expect("result lock");
    results.sort_by_key(|(i, _, _)| *i);
    let mut worst = exit::OK;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (i, result, text) in &results {
        out.write_all(text)?;
        if let Err(e) = result {
            writeln!(out, "scenario {}: error: {e:#}", scenarios[*i].name)?;
        }
        worst = worst.max(run_code(result));
    }
    Ok(worst)
}

/// `check-pe`: excitation table; exit 0 iff every window has `λ_min > 0`.
pub fn check_pe(path: &Path, delta: f64, stride: Option<f64>, out: &mut dyn Write) -> anyhow::Result<u8> {
    let scenario = load_scenario(path, Overrides::default())?;
    let reports = check_excitation(&scenario, delta, stride.unwrap_or(delta)).map_err(CliError::from)?;
    writeln!(out, "excitation windows for {} (delta = {delta} s)", scenario.name)?;
    writeln!(out, "{:>10} {:>14} {:>14}", "t0", "lambda_min", "lambda_max")?;
    for r in &reports {
        writeln!(out, "{:>10.3} {:>14.6e} {:>14.6e}", r.t0, r.lambda_min, r.lambda_max)?;
    }
    let worst = reports.iter().map(|r| r.lambda_min).fold(f64::INFINITY, f64::min);
    let excited = worst > 0.0;
    writeln!(
        out,
        "min lambda_min = {worst:e} over {} window(s): {}",
        reports.len(),
        if excited {
            "persistently exciting"
        } else {
            "NOT exciting"
        }
    )?;
    Ok(if excited { exit::OK } else { exit::UNHEALTHY })
}

/// `plot`: SVG figures from a run CSV into `out_dir` (default: the CSV's directory).
pub fn plot(csv: &Path, out_dir: Option<&Path>, out: &mut dyn Write) -> anyhow::Result<u8> {
    let dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| csv.parent().map(Path::to_path_buf).unwrap_or_default());
    let written = plot_csv(csv, &dir).map_err(|e| CliError::Invalid(e.to_string()))?;
    for p in &written {
        writeln!(out, "{}", p.display())?;
    }
    Ok(exit::OK)
}
