//! Joint simulation of plant, filter cascade and estimator on one time grid.
//!
//! Plant and filters form a single flattened ODE `[x | ξ | η | ζ | Φ]`
//! advanced by RK4. The estimator consumes regression samples taken from
//! that state at the start, midpoint (cubic Hermite) and end of each step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::estimators::{Estimator, EstimatorError, GradientConfig, GradientEstimator, LsFfConfig, LsFfEstimator};
use crate::gpebo::{filter_derivative, regression_from_flat, FilterState, ObserverConfig, RegressionSample};
use crate::numerics::{NumericsError, OdeSystem, Rk4};
use crate::plant::{check_divergence, step_count, PlantError, PlantSpec, TrajectoryLog};

#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorChoice {
    /// Plant and filters only.
    None,
    LsFf(LsFfConfig),
    Gradient(GradientConfig),
}

impl EstimatorChoice {
    pub fn kind(&self) -> &'static str {
        match self {
            EstimatorChoice::None => "none",
            EstimatorChoice::LsFf(_) => "lsff",
            EstimatorChoice::Gradient(_) => "gradient",
        }
    }

    fn build(&self, r: usize) -> Result<Option<Box<dyn Estimator>>, EstimatorError> {
        Ok(match self {
            EstimatorChoice::None => None,
            EstimatorChoice::LsFf(cfg) => Some(Box::new(LsFfEstimator::new(cfg.clone(), r)?)),
            EstimatorChoice::Gradient(cfg) => Some(Box::new(GradientEstimator::new(cfg.clone(), r)?)),
        })
    }
}

/// Additive Gaussian noise on the measured output, held constant over each
/// grid step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementNoise {
    pub std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_final: f64,
    pub noise: Option<MeasurementNoise>,
}

impl SimConfig {
    pub fn new(dt: f64, t_final: f64) -> Self {
        Self {
            dt,
            t_final,
            noise: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation setup: {0}")]
    Invalid(String),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("non-finite value in {signal} at t = {t}")]
    NonFinite { t: f64, signal: String },
}

impl SimError {
    /// True for failures of the numerical run itself rather than its setup.
    pub fn is_divergence(&self) -> bool {
        !matches!(
            self,
            SimError::Invalid(_)
                | SimError::Plant(PlantError::Invalid(_))
                | SimError::Estimator(EstimatorError::Config { .. })
        )
    }
}

/// Plant + filters as one ODE.
pub struct JointSystem<'a> {
    plant: &'a PlantSpec,
    observer: &'a ObserverConfig,
    n: usize,
    /// Noise added to the measured output for the current step.
    pub y_offset: f64,
}

impl<'a> JointSystem<'a> {
    pub fn new(plant: &'a PlantSpec, observer: &'a ObserverConfig) -> Self {
        Self {
            plant,
            observer,
            n: plant.n(),
            y_offset: 0.0,
        }
    }

    pub fn initial_state(&self) -> Vec<f64> {
        let mut s = self.plant.x0.clone();
        s.extend(FilterState::initial(self.n).to_flat());
        s
    }

    pub fn measured_output(&self, t: f64, state: &[f64]) -> f64 {
        self.plant.measure(t, &state[..self.n]) + self.y_offset
    }

    pub fn regression(&self, t: f64, state: &[f64]) -> RegressionSample {
        let y = self.measured_output(t, state);
        regression_from_flat(t, &self.plant.c_at(t), y, &state[self.n..])
    }
}

impl OdeSystem for JointSystem<'_> {
    fn dimension(&self) -> usize {
        self.n + FilterState::flat_len(self.n)
    }

    fn rhs(&self, t: f64, state: &[f64], out: &mut [f64]) {
        let n = self.n;
        let (x, filters) = state.split_at(n);
        let (dx, dfilters) = out.split_at_mut(n);
        let a = self.plant.a_at(t);
        let c = self.plant.c_at(t);
        let l = self.observer.l_at(t);
        let u = self.plant.input_at(t);
        let y = crate::numerics::dot(&c, x);
        for i in 0..n {
            let ax: f64 = (0..n).map(|j| a[(i, j)] * x[j]).sum();
            dx[i] = ax + self.plant.k[i] * y + self.plant.b[i] * u;
        }
        let mut a0 = a;
        for i in 0..n {
            for j in 0..n {
                a0[(i, j)] -= l[i] * c[j];
            }
        }
        filter_derivative(a0.as_slice(), &l, y + self.y_offset, u, filters, dfilters);
    }
}

/// Everything logged by a joint run, one entry per grid point.
#[derive(Debug, Clone)]
pub struct JointRun {
    pub n: usize,
    pub dt: f64,
    pub times: Vec<f64>,
    pub u: Vec<f64>,
    /// Measured output.
    pub y: Vec<f64>,
    /// `[x | ξ | η | ζ | Φ]` per sample.
    pub states: Vec<Vec<f64>>,
    pub regression: Vec<RegressionSample>,
    /// Empty when the run has no estimator.
    pub theta_hat: Vec<Vec<f64>>,
    pub gain_norm: Vec<f64>,
    pub freeze_time: Option<f64>,
}

impl JointRun {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.states[i][..self.n]
    }

    pub fn filters(&self, i: usize) -> FilterState {
        FilterState::from_flat(self.n, &self.states[i][self.n..])
    }

    pub fn trajectory(&self) -> TrajectoryLog {
        TrajectoryLog {
            times: self.times.clone(),
            x: (0..self.len()).map(|i| self.x(i).to_vec()).collect(),
            y: self.y.clone(),
            u: self.u.clone(),
        }
    }
}

fn check_state(t: f64, n: usize, state: &[f64]) -> Result<(), SimError> {
    check_divergence(t, &state[..n])?;
    if let Some(pos) = state.iter().position(|v| !v.is_finite()) {
        return Err(SimError::NonFinite {
            t,
            signal: signal_name(n, pos),
        });
    }
    Ok(())
}

fn signal_name(n: usize, pos: usize) -> String {
    let nn = n * n;
    if pos < n {
        return format!("x{}", pos + 1);
    }
    let p = pos - n;
    if p < n {
        return format!("xi{}", p + 1);
    }
    let p = p - n;
    let name = ["eta", "zeta", "phi"][p / nn];
    let q = p % nn;
    format!("{name}[{},{}]", q / n + 1, q % n + 1)
}

/// Runs plant, filters and (optionally) an estimator over `[0, t_final]`.
pub fn run_joint(
    plant: &PlantSpec,
    observer: &ObserverConfig,
    estimator: &EstimatorChoice,
    cfg: &SimConfig,
) -> Result<JointRun, SimError> {
    plant.validate()?;
    let n = plant.n();
    if observer.l.len() != n {
        return Err(SimError::Invalid(format!(
            "observer gain l must have {n} entries, got {}",
            observer.l.len()
        )));
    }
    if !(cfg.dt > 0.0) || !(cfg.t_final > 0.0) {
        return Err(SimError::Invalid(format!(
            "dt and t_final must be positive (dt = {}, t_final = {})",
            cfg.dt, cfg.t_final
        )));
    }
    let r = 3 * n;
    let mut est = estimator.build(r)?;
    let steps = step_count(cfg.dt, cfg.t_final);
    let dt = cfg.dt;

    let mut noise = match cfg.noise {
        Some(MeasurementNoise { std, seed }) if std > 0.0 => {
            let dist = Normal::new(0.0, std).map_err(|e| SimError::Invalid(format!("noise: {e}")))?;
            Some((ChaCha8Rng::seed_from_u64(seed), dist))
        }
        _ => None,
    };
    let mut draw = move || noise.as_mut().map_or(0.0, |(rng, dist)| dist.sample(rng));

    let mut sys = JointSystem::new(plant, observer);
    let dim = sys.dimension();
    let mut rk = Rk4::new(dim);
    let mut state = sys.initial_state();
    let mut slope = vec![0.0; dim];
    let mut next_slope = vec![0.0; dim];
    let mut mid = vec![0.0; dim];

    let mut run = JointRun {
        n,
        dt,
        times: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        regression: Vec::with_capacity(steps + 1),
        theta_hat: Vec::new(),
        gain_norm: Vec::new(),
        freeze_time: None,
    };

    sys.y_offset = draw();
    sys.rhs(0.0, &state, &mut slope);
    for i in 0..=steps {
        let t = i as f64 * dt;
        let start_sample = sys.regression(t, &state);
        run.times.push(t);
        run.u.push(plant.input_at(t));
        run.y.push(sys.measured_output(t, &state));
        run.states.push(state.clone());
        if let Some(e) = est.as_ref() {
            run.theta_hat.push(e.theta().to_vec());
            if let Some(g) = e.gain_norm() {
                run.gain_norm.push(g);
            }
        }
        run.regression.push(start_sample.clone());
        if i == steps {
            break;
        }

        let prev = state.clone();
        rk.step_with_slope(&sys, t, &mut state, &slope, dt)?;
        check_state(t + dt, n, &state)?;
        sys.rhs(t + dt, &state, &mut next_slope);
        if let Some(e) = est.as_mut() {
            // cubic Hermite midpoint from end values and slopes
            for k in 0..dim {
                mid[k] = 0.5 * (prev[k] + state[k]) + 0.125 * dt * (slope[k] - next_slope[k]);
            }
            let mid_sample = sys.regression(t + 0.5 * dt, &mid);
            let end_sample = sys.regression(t + dt, &state);
            e.step(t, [&start_sample, &mid_sample, &end_sample], dt)?;
        }
        let offset = draw();
        if offset != sys.y_offset {
            sys.y_offset = offset;
            sys.rhs(t + dt, &state, &mut next_slope);
        }
        std::mem::swap(&mut slope, &mut next_slope);
    }
    run.freeze_time = est.as_ref().and_then(|e| e.freeze_time());
    Ok(run)
}
