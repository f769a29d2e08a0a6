//! State reconstruction, error signals and stability monitors.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::gpebo::{a0_at, FilterState, ObserverConfig, ThetaVector};
use crate::numerics::{FnSystem, Mat, NumericsError, Rk4};
use crate::plant::{step_count, PlantSpec, TrajectoryLog};
use crate::sim::JointRun;

/// `x̂ = ξ - Φê(0) + ηk̂ + ζb̂`.
pub fn reconstruct_state(fs: &FilterState, theta: &ThetaVector) -> Vec<f64> {
    let n = fs.n();
    (0..n)
        .map(|i| {
            let mut v = fs.xi[i];
            for j in 0..n {
                v += -fs.phi[(i, j)] * theta.e0[j] + fs.eta[(i, j)] * theta.k[j] + fs.zeta[(i, j)] * theta.b[j];
            }
            v
        })
        .collect()
}

/// `e = ξ + ηk + ζb - x`, which evolves as `e' = A₀e`.
pub fn observation_error(fs: &FilterState, k: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let n = fs.n();
    (0..n)
        .map(|i| {
            let mut v = fs.xi[i] - x[i];
            for j in 0..n {
                v += fs.eta[(i, j)] * k[j] + fs.zeta[(i, j)] * b[j];
            }
            v
        })
        .collect()
}

/// Estimates and their errors aligned with the trajectory grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateLog {
    pub times: Vec<f64>,
    pub x_hat: Vec<Vec<f64>>,
    pub theta_hat: Vec<Vec<f64>>,
    pub state_err: Vec<Vec<f64>>,
    pub param_err: Vec<Vec<f64>>,
}

impl EstimateLog {
    /// Builds the log from a joint run with an estimator attached.
    pub fn from_run(run: &JointRun, theta_true: &[f64]) -> Self {
        assert_eq!(run.theta_hat.len(), run.len(), "joint run has no estimator log");
        let mut log = EstimateLog {
            times: run.times.clone(),
            x_hat: Vec::with_capacity(run.len()),
            theta_hat: run.theta_hat.clone(),
            state_err: Vec::with_capacity(run.len()),
            param_err: Vec::with_capacity(run.len()),
        };
        for (i, th) in run.theta_hat.iter().enumerate() {
            let x_hat = reconstruct_state(&run.filters(i), &ThetaVector::from_slice(th));
            log.state_err
                .push(x_hat.iter().zip(run.x(i)).map(|(a, b)| a - b).collect());
            log.param_err
                .push(th.iter().zip(theta_true).map(|(a, b)| a - b).collect());
            log.x_hat.push(x_hat);
        }
        log
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonitorBounds {
    /// Cap on `sup ‖Φ(t)‖`.
    pub phi_bound: f64,
    /// Cap on `sup_t ∫₀ᵗ ‖Φ(t, s) b‖ ds`.
    pub bibs_bound: f64,
    /// The BIBS integral is evaluated at every `eval_every`-th grid point.
    pub eval_every: usize,
}

impl Default for MonitorBounds {
    fn default() -> Self {
        Self {
            phi_bound: 100.0,
            bibs_bound: 100.0,
            eval_every: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub phi_sup_norm: f64,
    pub bibs_integral_sup: f64,
    pub phi_bound: f64,
    pub bibs_bound: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonitorError {
    #[error("state transition over [{t}, {t}+dt] is singular (|det| = {det:e})")]
    SingularTransition { t: f64, det: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid monitor setup: {0}")]
    Invalid(String),
}

/// Numeric checks of uniform stability of `A₀` and the BIBS bound with
/// input vector `b`.
///
/// `Φ(t, s)` is built from one-step RK4 transition matrices
/// `Φ(t_{i+1}, t_i)`, never from `Φ(s)⁻¹`, which is numerically singular
/// once `A₀` has contracted for a few seconds.
pub fn assumption_monitors(
    plant: &PlantSpec,
    observer: &ObserverConfig,
    dt: f64,
    t_final: f64,
    bounds: &MonitorBounds,
) -> Result<AssumptionReport, MonitorError> {
    if !(dt > 0.0 && t_final > 0.0) || bounds.eval_every == 0 {
        return Err(MonitorError::Invalid(format!(
            "dt = {dt}, t_final = {t_final}, eval_every = {}",
            bounds.eval_every
        )));
    }
    let n = plant.n();
    let steps = step_count(dt, t_final);
    let sys = FnSystem::new(n * n, |t, m: &[f64], out: &mut [f64]| {
        let a0 = a0_at(plant, observer, t);
        crate::numerics::mul_into(a0.as_slice(), m, out, n, n, n);
    });
    let mut rk = Rk4::new(n * n);
    let mut transitions = Vec::with_capacity(steps);
    let mut phi = Mat::identity(n);
    let mut phi_sup: f64 = 1.0;
    for i in 0..steps {
        let t = i as f64 * dt;
        let mut m = Mat::identity(n);
        rk.step(&sys, t, m.as_mut_slice(), dt)?;
        let det = m.det();
        if !(det.abs() >= 1e-12) {
            return Err(MonitorError::SingularTransition { t, det });
        }
        phi = m.matmul(&phi).expect("square");
        phi_sup = phi_sup.max(phi.spectral_norm());
        transitions.push(m);
    }

    let b_norm = crate::numerics::dot(&plant.b, &plant.b).sqrt();
    let mut bibs_sup: f64 = 0.0;
    let mut eval_points: Vec<usize> = (bounds.eval_every..=steps).step_by(bounds.eval_every).collect();
    if eval_points.last() != Some(&steps) {
        eval_points.push(steps);
    }
    let mut g = vec![0.0; n * n];
    let mut scratch = vec![0.0; n * n];
    let mut gb = vec![0.0; n];
    for &m_idx in &eval_points {
        // trapezoid over s = t_0 .. t_m of ‖Φ(t_m, s) b‖, walking s backwards
        g.copy_from_slice(Mat::identity(n).as_slice());
        let mut prev = b_norm;
        let mut integral = 0.0;
        for j in (0..m_idx).rev() {
            crate::numerics::mul_into(&g, transitions[j].as_slice(), &mut scratch, n, n, n);
            std::mem::swap(&mut g, &mut scratch);
            crate::numerics::mul_into(&g, &plant.b, &mut gb, n, n, 1);
            let cur = crate::numerics::dot(&gb, &gb).sqrt();
            integral += 0.5 * dt * (prev + cur);
            prev = cur;
        }
        bibs_sup = bibs_sup.max(integral);
    }

    let stable =
        phi_sup.is_finite() && bibs_sup.is_finite() && phi_sup <= bounds.phi_bound && bibs_sup <= bounds.bibs_bound;
    Ok(AssumptionReport {
        phi_sup_norm: phi_sup,
        bibs_integral_sup: bibs_sup,
        phi_bound: bounds.phi_bound,
        bibs_bound: bounds.bibs_bound,
        stable,
    })
}

/// Convergence metrics for one error signal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalMetrics {
    pub name: String,
    /// RMS over the last 10% of the horizon.
    pub final_rms: f64,
    pub max_abs: f64,
    /// First time after which `|err| < tol·(1 + |true|)` holds for the rest
    /// of the run; equals the horizon end when the band is never settled.
    pub time_to_tolerance: f64,
    pub settled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub relative_tolerance: f64,
    pub signals: Vec<SignalMetrics>,
}

impl MetricsSummary {
    pub fn all_settled(&self) -> bool {
        self.signals.iter().all(|s| s.settled)
    }

    pub fn get(&self, name: &str) -> Option<&SignalMetrics> {
        self.signals.iter().find(|s| s.name == name)
    }
}

/// Computes metrics for the signal `err` against reference magnitudes
/// `truth` sampled at `times`.
pub fn signal_metrics(name: &str, times: &[f64], err: &[f64], truth: &[f64], rel_tol: f64) -> SignalMetrics {
    assert_eq!(times.len(), err.len());
    assert_eq!(times.len(), truth.len());
    let (Some(&t_first), Some(&t_last)) = (times.first(), times.last()) else {
        return SignalMetrics {
            name: name.to_string(),
            final_rms: 0.0,
            max_abs: 0.0,
            time_to_tolerance: 0.0,
            settled: true,
        };
    };
    let cutoff = t_last - 0.1 * (t_last - t_first);
    let tail: Vec<f64> = times
        .iter()
        .zip(err)
        .filter(|(t, _)| **t >= cutoff)
        .map(|(_, e)| *e)
        .collect();
    let final_rms = (tail.iter().map(|e| e * e).sum::<f64>() / tail.len() as f64).sqrt();
    let max_abs = err.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let last_violation = err
        .iter()
        .zip(truth)
        .rposition(|(e, x)| !(e.abs() < rel_tol * (1.0 + x.abs())));
    let (time_to_tolerance, settled) = match last_violation {
        None => (t_first, true),
        Some(i) if i + 1 == times.len() => (t_last, false),
        Some(i) => (times[i + 1], true),
    };
    SignalMetrics {
        name: name.to_string(),
        final_rms,
        max_abs,
        time_to_tolerance,
        settled,
    }
}

/// Metrics for every state error `x̂ᵢ - xᵢ` and parameter error `Θ̂ᵢ - Θᵢ`.
pub fn error_metrics(traj: &TrajectoryLog, est: &EstimateLog, theta_true: &[f64], rel_tol: f64) -> MetricsSummary {
    assert_eq!(traj.len(), est.times.len(), "logs are not aligned");
    let mut signals = Vec::new();
    let n = traj.x.first().map_or(0, |x| x.len());
    for i in 0..n {
        let err: Vec<f64> = est.state_err.iter().map(|e| e[i]).collect();
        let truth: Vec<f64> = traj.x.iter().map(|x| x[i]).collect();
        signals.push(signal_metrics(
            &format!("xerr{}", i + 1),
            &traj.times,
            &err,
            &truth,
            rel_tol,
        ));
    }
    for (i, &theta) in theta_true.iter().enumerate() {
        let err: Vec<f64> = est.param_err.iter().map(|e| e[i]).collect();
        let truth = vec![theta; err.len()];
        signals.push(signal_metrics(
            &format!("thetaerr{}", i + 1),
            &traj.times,
            &err,
            &truth,
            rel_tol,
        ));
    }
    MetricsSummary {
        relative_tolerance: rel_tol,
        signals,
    }
}

/// Pass/fail flags of a completed run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunFlags {
    pub all_errors_settled: bool,
    pub monitors_stable: bool,
    pub regression_identity_ok: bool,
}

/// Machine-readable summary of one scenario run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub estimator: String,
    pub dt: f64,
    pub t_final: f64,
    pub theta_true: Vec<f64>,
    pub theta_hat_final: Vec<f64>,
    pub freeze_time: Option<f64>,
    /// `max_t |z - ΨΘ|` with the true parameters.
    pub regression_identity_max: f64,
    pub metrics: MetricsSummary,
    pub assumptions: AssumptionReport,
    pub flags: RunFlags,
}

impl RunSummary {
    pub fn healthy(&self) -> bool {
        self.flags.monitors_stable && self.flags.regression_identity_ok
    }
}

fn fmt_time(settled: bool, t: f64) -> String {
    if settled {
        format!("{t:.3} s")
    } else {
        "not settled".to_string()
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "scenario {} ({} estimator, dt = {}, t_final = {})",
            self.scenario, self.estimator, self.dt, self.t_final
        )?;
        writeln!(
            f,
            "  regression identity max |z - Psi*Theta| = {:.3e}",
            self.regression_identity_max
        )?;
        if let Some(t) = self.freeze_time {
            writeln!(f, "  gain matrix frozen at t = {t:.3} s")?;
        }
        writeln!(
            f,
            "  sup |Phi| = {:.4} (cap {}), BIBS integral sup = {:.4} (cap {}) -> {}",
            self.assumptions.phi_sup_norm,
            self.assumptions.phi_bound,
            self.assumptions.bibs_integral_sup,
            self.assumptions.bibs_bound,
            if self.assumptions.stable { "stable" } else { "UNSTABLE" }
        )?;
        writeln!(
            f,
            "  {:<10} {:>12} {:>12} {:>14}",
            "signal", "final rms", "max |err|", "settles at"
        )?;
        for s in &self.metrics.signals {
            writeln!(
                f,
                "  {:<10} {:>12.3e} {:>12.3e} {:>14}",
                s.name,
                s.final_rms,
                s.max_abs,
                fmt_time(s.settled, s.time_to_tolerance)
            )?;
        }
        for (name, ok) in [
            ("all errors settled", self.flags.all_errors_settled),
            ("monitors stable", self.flags.monitors_stable),
            ("regression identity", self.flags.regression_identity_ok),
        ] {
            writeln!(f, "  [{}] {name}", if ok { "PASS" } else { "FAIL" })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timefunc::TimeExpr;

    fn diag_plant(d: [f64; 2], b: [f64; 2]) -> (PlantSpec, ObserverConfig) {
        let plant = PlantSpec {
            a: vec![
                vec![TimeExpr::constant(d[0]), TimeExpr::zero()],
                vec![TimeExpr::zero(), TimeExpr::constant(d[1])],
            ],
            c: vec![TimeExpr::constant(1.0), TimeExpr::zero()],
            k: vec![0.0, 0.0],
            b: b.to_vec(),
            x0: vec![0.0, 0.0],
            input: TimeExpr::zero(),
        };
        let observer = ObserverConfig {
            l: vec![TimeExpr::zero(), TimeExpr::zero()],
        };
        (plant, observer)
    }

    #[test]
    fn reconstruct_examples() {
        let fs = FilterState::initial(2);
        let theta = ThetaVector {
            e0: vec![-3.0, 2.0],
            k: vec![-1.0, -3.0],
            b: vec![1.0, 2.0],
        };
        assert_eq!(reconstruct_state(&fs, &theta), vec![3.0, -2.0]);

        let fs = FilterState {
            xi: vec![0.5, -0.25],
            eta: Mat::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]),
            zeta: Mat::from_rows(&[&[5.0, 6.0], &[7.0, 8.0]]),
            phi: Mat::identity(2),
        };
        let zero = ThetaVector::from_slice(&[0.0; 6]);
        assert_eq!(reconstruct_state(&fs, &zero), vec![0.5, -0.25]);
    }

    #[test]
    fn bibs_closed_form() {
        // A₀ = -I, b = [1, 0]: ∫₀ᵗ e^{-(t-s)} ds = 1 - e^{-t}
        let (plant, observer) = diag_plant([-1.0, -1.0], [1.0, 0.0]);
        let bounds = MonitorBounds {
            eval_every: 50,
            ..Default::default()
        };
        let r = assumption_monitors(&plant, &observer, 1e-2, 10.0, &bounds).unwrap();
        assert!((r.bibs_integral_sup - (1.0 - (-10.0f64).exp())).abs() < 1e-5, "{r:?}");
        assert!((r.phi_sup_norm - 1.0).abs() < 1e-12);
        assert!(r.stable);
    }

    #[test]
    fn zero_dynamics_monitors() {
        let (plant, observer) = diag_plant([0.0, 0.0], [0.0, 0.0]);
        let r = assumption_monitors(&plant, &observer, 1e-2, 5.0, &MonitorBounds::default()).unwrap();
        assert_eq!(r.phi_sup_norm, 1.0);
        assert_eq!(r.bibs_integral_sup, 0.0);
        assert!(r.stable);
    }

    #[test]
    fn unstable_a0_flags() {
        let (plant, observer) = diag_plant([0.5, -1.0], [1.0, 1.0]);
        let r = assumption_monitors(&plant, &observer, 1e-2, 20.0, &MonitorBounds::default()).unwrap();
        assert!(r.phi_sup_norm > 100.0);
        assert!(!r.stable);
    }

    #[test]
    fn identical_logs_have_zero_metrics() {
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let zeros = vec![0.0; times.len()];
        let m = signal_metrics("x", &times, &zeros, &zeros, 0.05);
        assert_eq!((m.final_rms, m.max_abs, m.time_to_tolerance), (0.0, 0.0, 0.0));
        assert!(m.settled);
    }

    #[test]
    fn constant_offset_never_settles() {
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let ones = vec![1.0; times.len()];
        let zeros = vec![0.0; times.len()];
        let m = signal_metrics("x", &times, &ones, &zeros, 0.05);
        assert!((m.final_rms - 1.0).abs() < 1e-15);
        assert_eq!(m.max_abs, 1.0);
        assert!(!m.settled);
        assert_eq!(m.time_to_tolerance, 10.0);
    }

    #[test]
    fn settling_time_is_first_time_after_last_violation() {
        let times: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let err: Vec<f64> = times.iter().map(|t| if *t < 4.0 { 1.0 } else { 0.01 }).collect();
        let truth = vec![0.0; times.len()];
        let m = signal_metrics("x", &times, &err, &truth, 0.05);
        assert_eq!(m.time_to_tolerance, 4.0);
        assert!(m.settled);
        // a larger reference widens the band
        let truth = vec![100.0; times.len()];
        let m = signal_metrics("x", &times, &err, &truth, 0.05);
        assert_eq!(m.time_to_tolerance, 0.0);
    }
}
