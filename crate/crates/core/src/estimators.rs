//! Online identification of `Θ` from the regression stream.
//!
//! Two laws are provided:
//!
//! * least squares with forgetting factor
//!   `θ̂' = γFΨᵀ(z - Ψθ̂)`, `F' = -γFΨᵀΨF + βF` while `‖F‖ ≤ M`, else `F' = 0`;
//! * plain gradient `θ̂' = γΨᵀ(z - Ψθ̂)`.
//!
//! With the gains used in practice (γ = 1000, `F(0) = 10 I`) both laws are
//! far too stiff for an explicit step on a millisecond grid, so each grid
//! step is advanced by composing exact flows. For the unfrozen LS law the
//! information matrix `P = F⁻¹` and `q = Pθ̂` obey linear equations
//! `P' = γΨᵀΨ - βP`, `q' = γΨᵀz - βq`; a step is the Simpson rule on these
//! with exact exponential forgetting between nodes, and each data node is a
//! rank-one Sherman–Morrison update of `F`. Frozen LS and gradient steps use
//! the exact rank-one exponential of `θ̂' = γGΨᵀ(z - Ψθ̂)` at the same nodes.

use log::warn;
use thiserror::Error;

use crate::gpebo::RegressionSample;
use crate::numerics::{dot, one_sided_jacobi, sym_eigenvalues, Mat};

/// Relative tolerance on the smallest eigenvalue of `F` before the run is
/// declared unhealthy.
pub const PD_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("invalid estimator configuration: {field} {message}")]
    Config { field: &'static str, message: String },
    #[error("gain matrix F lost positive definiteness at t = {t}: min eigenvalue {min_eig:e}, max {max_eig:e}")]
    NotPositiveDefinite { t: f64, min_eig: f64, max_eig: f64 },
    #[error("non-finite estimate at t = {t}")]
    NonFinite { t: f64 },
}

fn config_err(field: &'static str, message: impl Into<String>) -> EstimatorError {
    EstimatorError::Config {
        field,
        message: message.into(),
    }
}

/// Tuning of the least-squares law with forgetting factor.
#[derive(Debug, Clone, PartialEq)]
pub struct LsFfConfig {
    pub gamma: f64,
    /// Forgetting factor; `0` gives plain continuous least squares.
    pub beta: f64,
    /// `F(0) = I / f0`.
    pub f0: f64,
    /// Freeze threshold on the spectral norm of `F`.
    pub m: f64,
    pub theta0: Option<Vec<f64>>,
}

impl LsFfConfig {
    pub fn validate(&self, r: usize) -> Result<(), EstimatorError> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(config_err("gamma", format!("must be > 0, got {}", self.gamma)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(config_err("beta", format!("must be >= 0, got {}", self.beta)));
        }
        if !(self.f0 > 0.0 && self.f0.is_finite()) {
            return Err(config_err("f0", format!("must be > 0, got {}", self.f0)));
        }
        if !(self.m > 0.0) {
            return Err(config_err("m", format!("must be > 0, got {}", self.m)));
        }
        check_theta0(&self.theta0, r)
    }

    pub fn initial_state(&self, r: usize) -> EstimatorState {
        EstimatorState {
            theta_hat: self.theta0.clone().unwrap_or_else(|| vec![0.0; r]),
            f: Mat::identity(r).scale(1.0 / self.f0),
        }
    }
}

fn check_theta0(theta0: &Option<Vec<f64>>, r: usize) -> Result<(), EstimatorError> {
    match theta0 {
        Some(t) if t.len() != r => Err(config_err("theta0", format!("must have {r} entries, got {}", t.len()))),
        Some(t) if t.iter().any(|v| !v.is_finite()) => Err(config_err("theta0", "must be finite")),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientConfig {
    pub gamma: f64,
    pub theta0: Option<Vec<f64>>,
}

impl GradientConfig {
    pub fn validate(&self, r: usize) -> Result<(), EstimatorError> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(config_err("gamma", format!("must be > 0, got {}", self.gamma)));
        }
        check_theta0(&self.theta0, r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub theta_hat: Vec<f64>,
    pub f: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorDerivative {
    pub theta_dot: Vec<f64>,
    pub f_dot: Mat,
}

/// Right-hand side of the LS-FF law with the `‖F‖₂ ≤ M` switch.
pub fn lsff_rhs(cfg: &LsFfConfig, st: &EstimatorState, sample: &RegressionSample) -> EstimatorDerivative {
    let r = sample.psi.len();
    let v = mat_vec(&st.f, &sample.psi);
    let err = sample.residual(&st.theta_hat);
    let theta_dot = v.iter().map(|vi| cfg.gamma * vi * err).collect();
    let f_dot = if st.f.spectral_norm() <= cfg.m {
        // F symmetric: FΨᵀΨF = v vᵀ
        let mut fd = st.f.scale(cfg.beta);
        for i in 0..r {
            for j in 0..r {
                fd[(i, j)] -= cfg.gamma * v[i] * v[j];
            }
        }
        fd
    } else {
        Mat::zeros(r, r)
    };
    EstimatorDerivative { theta_dot, f_dot }
}

/// Right-hand side of the gradient law.
pub fn gradient_rhs(gamma: f64, theta_hat: &[f64], sample: &RegressionSample) -> Vec<f64> {
    let err = sample.residual(theta_hat);
    sample.psi.iter().map(|p| gamma * p * err).collect()
}

fn mat_vec(m: &Mat, v: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|i| dot(&m.as_slice()[i * m.cols()..(i + 1) * m.cols()], v))
        .collect()
}

/// `(1 - e^{-a τ}) / a`, stable for small `a τ`.
fn relax_weight(a: f64, tau: f64) -> f64 {
    let x = a * tau;
    if x.abs() < 1e-8 {
        tau * (1.0 - 0.5 * x)
    } else {
        -(-x).exp_m1() / a
    }
}

/// Exact flow of `θ' = γGψᵀ(z - ψθ)` for constant `ψ, z` over `tau`,
/// with `v = Gψᵀ` precomputed.
fn rank_one_relax(theta: &mut [f64], v: &[f64], sample: &RegressionSample, gamma: f64, tau: f64) {
    let s = dot(&sample.psi, v);
    let err = sample.residual(theta);
    let w = relax_weight(gamma * s, tau) * gamma * err;
    for (th, vi) in theta.iter_mut().zip(v) {
        *th += w * vi;
    }
}

/// Simpson nodes `t`, `t + h/2`, `t + h` and their weights.
pub const SIMPSON_WEIGHTS: [f64; 3] = [1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0];

/// Common stepping interface for the online estimators.
pub trait Estimator {
    fn theta(&self) -> &[f64];

    /// Advances over `[t, t + dt]` given regression samples at the start,
    /// midpoint and end of the step.
    fn step(&mut self, t: f64, nodes: [&RegressionSample; 3], dt: f64) -> Result<(), EstimatorError>;

    /// Spectral norm of the adaptation gain, if the law has one.
    fn gain_norm(&self) -> Option<f64> {
        None
    }

    fn freeze_time(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct LsFfEstimator {
    cfg: LsFfConfig,
    state: EstimatorState,
    f_norm: f64,
    frozen_at: Option<f64>,
}

impl LsFfEstimator {
    pub fn new(cfg: LsFfConfig, r: usize) -> Result<Self, EstimatorError> {
        cfg.validate(r)?;
        let state = cfg.initial_state(r);
        let f_norm = 1.0 / cfg.f0;
        Ok(Self {
            cfg,
            state,
            f_norm,
            frozen_at: None,
        })
    }

    pub fn config(&self) -> &LsFfConfig {
        &self.cfg
    }

    pub fn state(&self) -> &EstimatorState {
        &self.state
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen_at.is_some()
    }

    /// Exponential forgetting over `tau`: `F ← e^{βτ}F`, `θ̂` unchanged.
    fn forget(&mut self, tau: f64) {
        if self.cfg.beta != 0.0 && tau != 0.0 {
            let g = (self.cfg.beta * tau).exp();
            for v in self.state.f.as_mut_slice() {
                *v *= g;
            }
        }
    }

    /// Data flow over `tau` with a constant sample: rank-one information
    /// update `P ← P + γτΨᵀΨ` written for `F = P⁻¹`.
    fn absorb(&mut self, sample: &RegressionSample, tau: f64) {
        let r = sample.psi.len();
        let c = self.cfg.gamma * tau;
        let v = mat_vec(&self.state.f, &sample.psi);
        let s = dot(&sample.psi, &v);
        let denom = 1.0 + c * s;
        let f = self.state.f.as_mut_slice();
        for i in 0..r {
            for j in 0..r {
                f[i * r + j] -= c * v[i] * v[j] / denom;
            }
        }
        // θ̂ ← θ̂ + c F⁺Ψᵀ(z - Ψθ̂), and F⁺Ψᵀ = v / (1 + c s)
        let err = sample.residual(&self.state.theta_hat);
        let w = c * err / denom;
        for (th, vi) in self.state.theta_hat.iter_mut().zip(&v) {
            *th += w * vi;
        }
    }

    fn refresh_norm(&mut self, t: f64) -> Result<(), EstimatorError> {
        self.state.f.symmetrize();
        let ev = sym_eigenvalues(&self.state.f);
        let (max_eig, min_eig) = (ev[0], ev[ev.len() - 1]);
        if !max_eig.is_finite() || min_eig < -PD_TOLERANCE * max_eig.abs() {
            return Err(EstimatorError::NotPositiveDefinite { t, min_eig, max_eig });
        }
        self.f_norm = max_eig;
        Ok(())
    }
}

impl Estimator for LsFfEstimator {
    fn theta(&self) -> &[f64] {
        &self.state.theta_hat
    }

    fn step(&mut self, t: f64, nodes: [&RegressionSample; 3], dt: f64) -> Result<(), EstimatorError> {
        if self.frozen_at.is_none() && self.f_norm > self.cfg.m {
            self.frozen_at = Some(t);
        }
        if self.frozen_at.is_some() {
            for (sample, w) in nodes.iter().zip(SIMPSON_WEIGHTS) {
                let v = mat_vec(&self.state.f, &sample.psi);
                rank_one_relax(&mut self.state.theta_hat, &v, sample, self.cfg.gamma, w * dt);
            }
        } else {
            let half = 0.5 * dt;
            self.absorb(nodes[0], SIMPSON_WEIGHTS[0] * dt);
            self.forget(half);
            self.absorb(nodes[1], SIMPSON_WEIGHTS[1] * dt);
            self.forget(half);
            self.absorb(nodes[2], SIMPSON_WEIGHTS[2] * dt);
            self.refresh_norm(t + dt)?;
        }
        if self.state.theta_hat.iter().any(|v| !v.is_finite()) {
            return Err(EstimatorError::NonFinite { t: t + dt });
        }
        Ok(())
    }

    fn gain_norm(&self) -> Option<f64> {
        Some(self.f_norm)
    }

    fn freeze_time(&self) -> Option<f64> {
        self.frozen_at
    }
}

#[derive(Debug, Clone)]
pub struct GradientEstimator {
    gamma: f64,
    theta_hat: Vec<f64>,
}

impl GradientEstimator {
    pub fn new(cfg: GradientConfig, r: usize) -> Result<Self, EstimatorError> {
        cfg.validate(r)?;
        Ok(Self {
            gamma: cfg.gamma,
            theta_hat: cfg.theta0.unwrap_or_else(|| vec![0.0; r]),
        })
    }
}

impl Estimator for GradientEstimator {
    fn theta(&self) -> &[f64] {
        &self.theta_hat
    }

    fn step(&mut self, t: f64, nodes: [&RegressionSample; 3], dt: f64) -> Result<(), EstimatorError> {
        for (sample, w) in nodes.iter().zip(SIMPSON_WEIGHTS) {
            rank_one_relax(&mut self.theta_hat, &sample.psi, sample, self.gamma, w * dt);
        }
        if self.theta_hat.iter().any(|v| !v.is_finite()) {
            return Err(EstimatorError::NonFinite { t: t + dt });
        }
        Ok(())
    }
}

/// Windowed Gram matrix of the regressor and its extreme eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationReport {
    pub t0: f64,
    pub delta: f64,
    pub gram: Mat,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// Scans `[t0, t0 + delta]` windows starting every `stride` seconds.
///
/// The Gram integral uses the trapezoidal rule. Its eigenvalues are the
/// squared singular values of the weighted sample matrix, computed by
/// one-sided Jacobi so that nearly collinear regressor columns do not
/// produce negative or roundoff-dominated eigenvalues.
pub fn excitation_scan(samples: &[RegressionSample], delta: f64, stride: f64) -> Vec<ExcitationReport> {
    assert!(delta > 0.0 && stride > 0.0, "delta and stride must be positive");
    let (Some(first), Some(last)) = (samples.first(), samples.last()) else {
        return Vec::new();
    };
    let r = first.psi.len();
    let eps = 1e-9 * delta.max(1.0);
    let mut reports = Vec::new();
    let mut skipped = 0usize;
    let mut lo = 0usize;
    for j in 0.. {
        let t0 = first.t + j as f64 * stride;
        if t0 >= last.t - eps {
            break;
        }
        let t1 = t0 + delta;
        if t1 > last.t + eps {
            skipped += 1;
            continue;
        }
        while lo < samples.len() && samples[lo].t < t0 - eps {
            lo += 1;
        }
        let mut hi = lo;
        while hi + 1 < samples.len() && samples[hi + 1].t <= t1 + eps {
            hi += 1;
        }
        reports.push(window_report(&samples[lo..=hi], t0, delta, r));
    }
    if skipped > 0 {
        warn!(
            "skipped {skipped} excitation window(s) of {delta} s extending past the log end t = {}",
            last.t
        );
    }
    reports
}

fn window_report(window: &[RegressionSample], t0: f64, delta: f64, r: usize) -> ExcitationReport {
    let mut gram = Mat::zeros(r, r);
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(window.len()); r];
    for (i, s) in window.iter().enumerate() {
        let left = if i > 0 { s.t - window[i - 1].t } else { 0.0 };
        let right = if i + 1 < window.len() {
            window[i + 1].t - s.t
        } else {
            0.0
        };
        let w = 0.5 * (left + right);
        for a in 0..r {
            for b in 0..r {
                gram[(a, b)] += w * s.psi[a] * s.psi[b];
            }
        }
        let sw = w.sqrt();
        for (col, p) in cols.iter_mut().zip(&s.psi) {
            col.push(sw * p);
        }
    }
    one_sided_jacobi(&mut cols);
    let mut ev: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ExcitationReport {
        t0,
        delta,
        gram,
        lambda_min: ev.first().copied().unwrap_or(0.0),
        lambda_max: ev.last().copied().unwrap_or(0.0),
    }
}
