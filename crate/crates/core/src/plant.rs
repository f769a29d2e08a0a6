//! The true plant `dx/dt = A(t) x + k C(t)ᵀx + b u(t)`, `y = C(t)ᵀx`.

use thiserror::Error;

use crate::numerics::{FnSystem, Mat, NumericsError, Rk4};
use crate::timefunc::TimeExpr;

/// Any state component above this magnitude is treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("invalid plant: {0}")]
    Invalid(String),
    #[error("plant diverged at t = {t}: |x{index}| = {value:e} exceeds {DIVERGENCE_LIMIT:e}")]
    Diverged { t: f64, index: usize, value: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Linear time-varying SISO plant with unknown constant `k` and `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantSpec {
    /// `n x n` entries, row-major.
    pub a: Vec<Vec<TimeExpr>>,
    pub c: Vec<TimeExpr>,
    pub k: Vec<f64>,
    pub b: Vec<f64>,
    pub x0: Vec<f64>,
    pub input: TimeExpr,
}

impl PlantSpec {
    pub fn n(&self) -> usize {
        self.x0.len()
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let n = self.n();
        if n == 0 {
            return Err(PlantError::Invalid("x0 must have at least one entry".into()));
        }
        if self.a.len() != n || self.a.iter().any(|row| row.len() != n) {
            return Err(PlantError::Invalid(format!("a must be {n}x{n}")));
        }
        for (name, len) in [("c", self.c.len()), ("k", self.k.len()), ("b", self.b.len())] {
            if len != n {
                return Err(PlantError::Invalid(format!("{name} must have {n} entries, got {len}")));
            }
        }
        if let Some(v) = self.k.iter().chain(&self.b).chain(&self.x0).find(|v| !v.is_finite()) {
            return Err(PlantError::Invalid(format!("non-finite parameter {v}")));
        }
        Ok(())
    }

    pub fn a_at(&self, t: f64) -> Mat {
        let n = self.n();
        let mut m = Mat::zeros(n, n);
        for (i, row) in self.a.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                m[(i, j)] = e.eval(t);
            }
        }
        m
    }

    pub fn c_at(&self, t: f64) -> Vec<f64> {
        self.c.iter().map(|e| e.eval(t)).collect()
    }

    /// `C(t)ᵀ x`.
    pub fn measure(&self, t: f64, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, xi)| c.eval(t) * xi).sum()
    }

    pub fn input_at(&self, t: f64) -> f64 {
        self.input.eval(t)
    }

    /// Plant vector field; writes `dx/dt` into `out`.
    pub fn rhs(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let y = self.measure(t, x);
        let u = self.input_at(t);
        for (i, row) in self.a.iter().enumerate() {
            let ax: f64 = row.iter().zip(x).map(|(e, xj)| e.eval(t) * xj).sum();
            out[i] = ax + self.k[i] * y + self.b[i] * u;
        }
    }
}

/// Sampled ground truth on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Number of grid steps covering `[0, t_final]` with step `dt`.
pub fn step_count(dt: f64, t_final: f64) -> usize {
    (t_final / dt).round().max(1.0) as usize
}

pub(crate) fn check_divergence(t: f64, x: &[f64]) -> Result<(), PlantError> {
    match x.iter().enumerate().find(|(_, v)| !(v.abs() <= DIVERGENCE_LIMIT)) {
        Some((i, &value)) => Err(PlantError::Diverged { t, index: i + 1, value }),
        None => Ok(()),
    }
}

/// Integrates the plant alone with RK4 from `x0` over `[0, t_final]`.
pub fn simulate_plant(spec: &PlantSpec, dt: f64, t_final: f64) -> Result<TrajectoryLog, PlantError> {
    spec.validate()?;
    if !(dt > 0.0) || !(t_final > 0.0) {
        return Err(PlantError::Invalid(format!(
            "dt and t_final must be positive (dt = {dt}, t_final = {t_final})"
        )));
    }
    let n = spec.n();
    let steps = step_count(dt, t_final);
    let sys = FnSystem::new(n, |t, x: &[f64], out: &mut [f64]| spec.rhs(t, x, out));
    let mut rk = Rk4::new(n);
    let mut x = spec.x0.clone();
    let mut log = TrajectoryLog {
        times: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
    };
    for i in 0..=steps {
        let t = i as f64 * dt;
        log.times.push(t);
        log.y.push(spec.measure(t, &x));
        log.u.push(spec.input_at(t));
        log.x.push(x.clone());
        if i < steps {
            rk.step(&sys, t, &mut x, dt)?;
            check_divergence(t + dt, &x)?;
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rk4_step;
    use crate::scenario::paper_example;

    fn constant_plant(a: [[f64; 2]; 2], c: [f64; 2], k: [f64; 2], b: [f64; 2], x0: [f64; 2]) -> PlantSpec {
        PlantSpec {
            a: a.iter()
                .map(|row| row.iter().map(|&v| TimeExpr::constant(v)).collect())
                .collect(),
            c: c.iter().map(|&v| TimeExpr::constant(v)).collect(),
            k: k.to_vec(),
            b: b.to_vec(),
            x0: x0.to_vec(),
            input: TimeExpr::zero(),
        }
    }

    #[test]
    fn zero_dynamics_hold_state() {
        let p = constant_plant([[0.0; 2]; 2], [1.0, 0.0], [0.0; 2], [0.0; 2], [3.0, -2.0]);
        let log = simulate_plant(&p, 0.01, 1.0).unwrap();
        assert_eq!(log.len(), 101);
        assert!(log.x.iter().all(|x| x == &[3.0, -2.0]));
        assert!(log.y.iter().all(|&y| y == 3.0));
    }

    #[test]
    fn example_derivative_at_zero() {
        let p = paper_example().plant;
        let mut dx = [0.0; 2];
        p.rhs(0.0, &p.x0, &mut dx);
        assert!((dx[0] - 4.4).abs() < 1e-12, "{dx:?}");
        assert!((dx[1] - 17.6).abs() < 1e-12, "{dx:?}");
    }

    #[test]
    fn measure_examples() {
        let p = constant_plant([[0.0; 2]; 2], [1.0, 0.0], [0.0; 2], [0.0; 2], [0.0; 2]);
        assert_eq!(p.measure(0.0, &[3.0, -2.0]), 3.0);
        let p = constant_plant([[0.0; 2]; 2], [0.0, 0.0], [0.0; 2], [0.0; 2], [0.0; 2]);
        assert_eq!(p.measure(1.3, &[3.0, -2.0]), 0.0);
        let p = constant_plant([[0.0; 2]; 2], [1.0, 1.0], [0.0; 2], [0.0; 2], [0.0; 2]);
        assert_eq!(p.measure(0.0, &[2.0, 5.0]), 7.0);
    }

    #[test]
    fn unforced_plant_matches_separate_propagator() {
        // k = 0, u = 0: compare against an independently written dx = A(t) x stepper
        let mut p = paper_example().plant;
        p.k = vec![0.0, 0.0];
        p.input = TimeExpr::zero();
        let dt = 1e-3;
        let log = simulate_plant(&p, dt, 5.0).unwrap();
        let a = p.a.clone();
        let sys = crate::numerics::FnSystem::new(2, move |t, x: &[f64], out: &mut [f64]| {
            let m = [[a[0][0].eval(t), a[0][1].eval(t)], [a[1][0].eval(t), a[1][1].eval(t)]];
            out[0] = m[0][0] * x[0] + m[0][1] * x[1];
            out[1] = m[1][0] * x[0] + m[1][1] * x[1];
        });
        let mut x = p.x0.clone();
        for (i, logged) in log.x.iter().enumerate() {
            let scale = 1.0 + x[0].abs().max(x[1].abs());
            assert!((logged[0] - x[0]).abs() <= 1e-12 * scale);
            assert!((logged[1] - x[1]).abs() <= 1e-12 * scale);
            x = rk4_step(&sys, i as f64 * dt, &x, dt).unwrap();
        }
    }

    #[test]
    fn divergence_is_reported() {
        let p = constant_plant([[5.0, 0.0], [0.0, 0.0]], [1.0, 0.0], [0.0; 2], [0.0; 2], [1.0, 0.0]);
        match simulate_plant(&p, 1e-2, 10.0) {
            Err(PlantError::Diverged { t, index, .. }) => {
                assert_eq!(index, 1);
                assert!(t > 4.0 && t < 4.2, "{t}");
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_shapes_and_horizon() {
        let mut p = constant_plant([[0.0; 2]; 2], [1.0, 0.0], [0.0; 2], [0.0; 2], [1.0, 0.0]);
        assert!(simulate_plant(&p, 0.0, 1.0).is_err());
        assert!(simulate_plant(&p, 0.1, 0.0).is_err());
        p.k.push(1.0);
        assert!(matches!(p.validate(), Err(PlantError::Invalid(_))));
    }
}
