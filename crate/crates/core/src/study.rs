//! End-to-end execution of a [`Scenario`].

use thiserror::Error;

use crate::estimators::{excitation_scan, ExcitationReport};
use crate::observer::{assumption_monitors, error_metrics, EstimateLog, MonitorError, RunFlags, RunSummary};
use crate::plant::TrajectoryLog;
use crate::scenario::Scenario;
use crate::sim::{run_joint, EstimatorChoice, JointRun, SimError};

/// Regression identity residual allowed per unit of output magnitude.
pub const IDENTITY_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StudyError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error("invalid excitation scan: {0}")]
    Scan(String),
}

impl StudyError {
    pub fn is_divergence(&self) -> bool {
        matches!(self, StudyError::Sim(e) if e.is_divergence())
    }
}

/// Everything produced by one scenario run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub run: JointRun,
    pub trajectory: TrajectoryLog,
    pub estimates: EstimateLog,
    pub summary: RunSummary,
}

/// `max_t |z - ΨΘ|` over a run.
pub fn regression_identity_max(run: &JointRun, theta: &[f64]) -> f64 {
    run.regression
        .iter()
        .fold(0.0f64, |m, s| m.max(s.residual(theta).abs()))
}

/// Runs plant, filters and estimator, then the monitors and error metrics.
pub fn execute(scenario: &Scenario) -> Result<Outcome, StudyError> {
    if matches!(scenario.estimator, EstimatorChoice::None) {
        return Err(StudyError::Sim(SimError::Invalid("a run needs an estimator".into())));
    }
    let theta_true = scenario.theta_true();
    let run = run_joint(&scenario.plant, &scenario.observer, &scenario.estimator, &scenario.sim)?;
    let trajectory = run.trajectory();
    let estimates = EstimateLog::from_run(&run, &theta_true);
    let metrics = error_metrics(&trajectory, &estimates, &theta_true, scenario.tolerance);
    let assumptions = assumption_monitors(
        &scenario.plant,
        &scenario.observer,
        scenario.sim.dt,
        scenario.sim.t_final,
        &scenario.monitors,
    )?;
    let identity = regression_identity_max(&run, &theta_true);
    let y_scale = run.y.iter().fold(1.0f64, |m, y| m.max(y.abs()));
    let flags = RunFlags {
        all_errors_settled: metrics.all_settled(),
        monitors_stable: assumptions.stable,
        regression_identity_ok: identity < IDENTITY_TOLERANCE * y_scale,
    };
    let summary = RunSummary {
        scenario: scenario.name.clone(),
        estimator: scenario.estimator.kind().to_string(),
        dt: scenario.sim.dt,
        t_final: scenario.sim.t_final,
        theta_true,
        theta_hat_final: run.theta_hat.last().cloned().unwrap_or_default(),
        freeze_time: run.freeze_time,
        regression_identity_max: identity,
        metrics,
        assumptions,
        flags,
    };
    Ok(Outcome {
        run,
        trajectory,
        estimates,
        summary,
    })
}

/// Runs plant and filters only and scans the regressor Gram matrix over
/// windows of length `delta`, starting every `stride` seconds.
pub fn check_excitation(scenario: &Scenario, delta: f64, stride: f64) -> Result<Vec<ExcitationReport>, StudyError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(StudyError::Scan(format!("delta must be > 0, got {delta}")));
    }
    if !(stride > 0.0 && stride.is_finite()) {
        return Err(StudyError::Scan(format!("stride must be > 0, got {stride}")));
    }
    if delta > scenario.sim.t_final {
        return Err(StudyError::Scan(format!(
            "delta = {delta} exceeds the horizon t_final = {}; no windows",
            scenario.sim.t_final
        )));
    }
    let run = run_joint(
        &scenario.plant,
        &scenario.observer,
        &EstimatorChoice::None,
        &scenario.sim,
    )?;
    let reports = excitation_scan(&run.regression, delta, stride);
    if reports.is_empty() {
        return Err(StudyError::Scan(format!("no complete window of length {delta}")));
    }
    Ok(reports)
}
