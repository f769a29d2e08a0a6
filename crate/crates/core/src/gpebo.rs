//! Filter cascade that turns state estimation into a linear regression.
//!
//! With `A₀(t) = A(t) - L(t)C(t)ᵀ` the filters
//!
//! ```text
//! ξ' = A₀ξ + L y,   ξ(0) = 0
//! η' = A₀η + I y,   η(0) = 0
//! ζ' = A₀ζ + I u,   ζ(0) = 0
//! Φ' = A₀Φ,         Φ(0) = I
//! ```
//!
//! satisfy `x - ξ = ηk + ζb - Φe(0)` with `e(0) = -x(0)`, so
//! `z = y - Cᵀξ` and `Ψ = [-CᵀΦ | Cᵀη | Cᵀζ]` obey `z = ΨΘ` for
//! `Θ = [e(0); k; b]`.

use crate::numerics::{mul_into, Mat};
use crate::plant::PlantSpec;
use crate::timefunc::TimeExpr;

/// Output-injection gain `L(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverConfig {
    pub l: Vec<TimeExpr>,
}

impl ObserverConfig {
    pub fn l_at(&self, t: f64) -> Vec<f64> {
        self.l.iter().map(|e| e.eval(t)).collect()
    }
}

/// `A(t) - L(t) C(t)ᵀ`.
pub fn a0_at(plant: &PlantSpec, observer: &ObserverConfig, t: f64) -> Mat {
    let mut a0 = plant.a_at(t);
    let l = observer.l_at(t);
    let c = plant.c_at(t);
    for i in 0..l.len() {
        for j in 0..c.len() {
            a0[(i, j)] -= l[i] * c[j];
        }
    }
    a0
}

/// Internal states of the filter cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub xi: Vec<f64>,
    pub eta: Mat,
    pub zeta: Mat,
    pub phi: Mat,
}

impl FilterState {
    /// `ξ = 0, η = 0, ζ = 0, Φ = I`.
    pub fn initial(n: usize) -> Self {
        Self {
            xi: vec![0.0; n],
            eta: Mat::zeros(n, n),
            zeta: Mat::zeros(n, n),
            phi: Mat::identity(n),
        }
    }

    pub fn n(&self) -> usize {
        self.xi.len()
    }

    /// Flat length `n + 3n²`.
    pub fn flat_len(n: usize) -> usize {
        n + 3 * n * n
    }

    /// Layout `[ξ | η | ζ | Φ]`, matrices row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::flat_len(self.n()));
        v.extend_from_slice(&self.xi);
        v.extend_from_slice(self.eta.as_slice());
        v.extend_from_slice(self.zeta.as_slice());
        v.extend_from_slice(self.phi.as_slice());
        v
    }

    pub fn from_flat(n: usize, v: &[f64]) -> Self {
        assert_eq!(v.len(), Self::flat_len(n));
        let nn = n * n;
        Self {
            xi: v[..n].to_vec(),
            eta: Mat::from_row_major(n, n, v[n..n + nn].to_vec()),
            zeta: Mat::from_row_major(n, n, v[n + nn..n + 2 * nn].to_vec()),
            phi: Mat::from_row_major(n, n, v[n + 2 * nn..].to_vec()),
        }
    }
}

/// Writes the filter derivatives for a flat `[ξ | η | ζ | Φ]` block.
///
/// `a0` is `n x n` row-major, `l` the gain at the same instant.
pub fn filter_derivative(a0: &[f64], l: &[f64], y: f64, u: f64, filters: &[f64], out: &mut [f64]) {
    let n = l.len();
    let nn = n * n;
    let (xi, rest) = filters.split_at(n);
    let (dxi, drest) = out.split_at_mut(n);
    mul_into(a0, xi, dxi, n, n, 1);
    for i in 0..n {
        dxi[i] += l[i] * y;
    }
    for (block, forcing) in [(0, y), (1, u), (2, 0.0)] {
        let src = &rest[block * nn..(block + 1) * nn];
        let dst = &mut drest[block * nn..(block + 1) * nn];
        mul_into(a0, src, dst, n, n, n);
        if forcing != 0.0 {
            for i in 0..n {
                dst[i * n + i] += forcing;
            }
        }
    }
}

/// Derivative of every filter state at time `t`.
pub fn filter_rhs(
    plant: &PlantSpec,
    observer: &ObserverConfig,
    t: f64,
    fs: &FilterState,
    y: f64,
    u: f64,
) -> FilterState {
    let n = fs.n();
    let a0 = a0_at(plant, observer, t);
    let mut out = vec![0.0; FilterState::flat_len(n)];
    filter_derivative(a0.as_slice(), &observer.l_at(t), y, u, &fs.to_flat(), &mut out);
    FilterState::from_flat(n, &out)
}

/// One time-stamped sample of the scalar regression `z = ΨΘ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSample {
    pub t: f64,
    pub z: f64,
    pub psi: Vec<f64>,
}

impl RegressionSample {
    pub fn predict(&self, theta: &[f64]) -> f64 {
        crate::numerics::dot(&self.psi, theta)
    }

    pub fn residual(&self, theta: &[f64]) -> f64 {
        self.z - self.predict(theta)
    }
}

/// Computes `z` and `Ψ` from the flat filter block and the measured output.
pub fn regression_from_flat(t: f64, c: &[f64], y: f64, filters: &[f64]) -> RegressionSample {
    let n = c.len();
    let nn = n * n;
    let xi = &filters[..n];
    let eta = &filters[n..n + nn];
    let zeta = &filters[n + nn..n + 2 * nn];
    let phi = &filters[n + 2 * nn..];
    let ct_times = |m: &[f64], j: usize| -> f64 { (0..n).map(|i| c[i] * m[i * n + j]).sum() };
    let mut psi = Vec::with_capacity(3 * n);
    psi.extend((0..n).map(|j| -ct_times(phi, j)));
    psi.extend((0..n).map(|j| ct_times(eta, j)));
    psi.extend((0..n).map(|j| ct_times(zeta, j)));
    let z = y - crate::numerics::dot(c, xi);
    RegressionSample { t, z, psi }
}

pub fn assemble_regression(plant: &PlantSpec, t: f64, fs: &FilterState, y: f64) -> RegressionSample {
    regression_from_flat(t, &plant.c_at(t), y, &fs.to_flat())
}

/// Unknown parameter vector `Θ = [e(0); k; b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaVector {
    pub e0: Vec<f64>,
    pub k: Vec<f64>,
    pub b: Vec<f64>,
}

impl ThetaVector {
    /// Ground truth for zero filter initial conditions: `e(0) = -x(0)`.
    pub fn truth(plant: &PlantSpec) -> Self {
        Self {
            e0: plant.x0.iter().map(|v| -v).collect(),
            k: plant.k.clone(),
            b: plant.b.clone(),
        }
    }

    pub fn from_slice(theta: &[f64]) -> Self {
        assert_eq!(theta.len() % 3, 0, "theta length must be 3n");
        let n = theta.len() / 3;
        Self {
            e0: theta[..n].to_vec(),
            k: theta[n..2 * n].to_vec(),
            b: theta[2 * n..].to_vec(),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        [&self.e0[..], &self.k[..], &self.b[..]].concat()
    }
}

/// Spectral-norm bound check on a logged fundamental matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalMatrixReport {
    pub sup_norm: f64,
    /// Time at which the supremum was attained.
    pub argmax_t: f64,
    pub bound: f64,
    pub within_bound: bool,
}

pub fn fundamental_matrix_checks<'a>(
    phi_log: impl IntoIterator<Item = (f64, &'a Mat)>,
    bound: f64,
) -> FundamentalMatrixReport {
    let (mut sup_norm, mut argmax_t) = (0.0, 0.0);
    for (t, phi) in phi_log {
        let norm = phi.spectral_norm();
        if !(norm <= sup_norm) {
            sup_norm = norm;
            argmax_t = t;
        }
    }
    FundamentalMatrixReport {
        sup_norm,
        argmax_t,
        bound,
        within_bound: sup_norm.is_finite() && sup_norm <= bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::paper_example;

    #[test]
    fn zero_forcing_at_initial_conditions() {
        let sc = paper_example();
        let fs = FilterState::initial(2);
        let d = filter_rhs(&sc.plant, &sc.observer, 0.7, &fs, 0.0, 0.0);
        assert_eq!(d.xi, vec![0.0, 0.0]);
        assert_eq!(d.eta, Mat::zeros(2, 2));
        assert_eq!(d.zeta, Mat::zeros(2, 2));
        assert_eq!(d.phi, a0_at(&sc.plant, &sc.observer, 0.7));
    }

    #[test]
    fn example_filters_at_zero() {
        let sc = paper_example();
        let fs = FilterState::initial(2);
        let y0 = sc.plant.measure(0.0, &sc.plant.x0);
        assert_eq!(y0, 3.0);
        let d = filter_rhs(&sc.plant, &sc.observer, 0.0, &fs, y0, 0.0);
        assert!(
            (d.xi[0] - 2.4).abs() < 1e-14 && (d.xi[1] - 3.6).abs() < 1e-14,
            "{:?}",
            d.xi
        );
        assert_eq!(d.eta, Mat::identity(2).scale(3.0));
        assert_eq!(d.zeta, Mat::zeros(2, 2));
    }

    #[test]
    fn a0_from_a_and_l() {
        let sc = paper_example();
        assert_eq!(
            a0_at(&sc.plant, &sc.observer, 0.0),
            Mat::from_rows(&[&[1.0, -1.0], &[5.0, -4.0]])
        );
        // the (1,1) entry keeps a residual 0.5 sin(0.5 t)
        let t = 1.3;
        let a0 = a0_at(&sc.plant, &sc.observer, t);
        assert!((a0[(0, 0)] - (1.0 + 0.5 * (0.5 * t).sin())).abs() < 1e-14);
        assert!((a0[(1, 0)] - (5.0 + 0.5 * t.sin())).abs() < 1e-14);
    }

    #[test]
    fn regression_at_initial_conditions() {
        let sc = paper_example();
        let fs = FilterState::initial(2);
        let s = assemble_regression(&sc.plant, 0.0, &fs, 3.0);
        assert_eq!(s.z, 3.0);
        assert_eq!(s.psi, vec![-1.0, -0.0, 0.0, 0.0, 0.0, 0.0]);
        let theta = ThetaVector::truth(&sc.plant).to_vec();
        assert_eq!(theta, vec![-3.0, 2.0, -1.0, -3.0, 1.0, 2.0]);
        assert_eq!(s.predict(&theta), 3.0);
        assert_eq!(ThetaVector::from_slice(&theta), ThetaVector::truth(&sc.plant));
    }

    #[test]
    fn flat_round_trip() {
        let fs = FilterState {
            xi: vec![1.0, 2.0],
            eta: Mat::from_rows(&[&[3.0, 4.0], &[5.0, 6.0]]),
            zeta: Mat::from_rows(&[&[7.0, 8.0], &[9.0, 10.0]]),
            phi: Mat::from_rows(&[&[11.0, 12.0], &[13.0, 14.0]]),
        };
        assert_eq!(FilterState::from_flat(2, &fs.to_flat()), fs);
    }

    #[test]
    fn phi_norm_checks() {
        let id = Mat::identity(2);
        let r = fundamental_matrix_checks((0..10).map(|i| (i as f64, &id)), 1.0);
        assert_eq!(r.sup_norm, 1.0);
        assert!(r.within_bound);

        // diag(e^-t, e^-2t): spectral norm e^-t, supremum 1 at t = 0
        let log: Vec<(f64, Mat)> = (0..100)
            .map(|i| {
                let t = i as f64 * 0.1;
                (t, Mat::diag(&[(-t).exp(), (-2.0 * t).exp()]))
            })
            .collect();
        let r = fundamental_matrix_checks(log.iter().map(|(t, m)| (*t, m)), 0.5);
        assert!((r.sup_norm - 1.0).abs() < 1e-15);
        assert_eq!(r.argmax_t, 0.0);
        assert!(!r.within_bound);
    }
}
