//! Dense matrices, Jacobi eigen/singular value routines and a fixed-step RK4.

use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("non-finite derivative at t = {t}")]
    NonFinite { t: f64 },
    #[error("state length {got} does not match system dimension {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Dense row-major real matrix. Vectors are `n x 1`.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn column(v: &[f64]) -> Self {
        Self::from_row_major(v.len(), 1, v.to_vec())
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn check_same(&self, other: &Mat, op: &'static str) -> Result<(), NumericsError> {
        if self.shape() != other.shape() {
            return Err(NumericsError::Shape {
                op,
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Mat) -> Result<Mat, NumericsError> {
        self.check_same(other, "add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Mat) -> Result<Mat, NumericsError> {
        self.check_same(other, "sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    fn zip_map(&self, other: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn matmul(&self, other: &Mat) -> Result<Mat, NumericsError> {
        if self.cols != other.rows {
            return Err(NumericsError::Shape {
                op: "matmul",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let mut out = Mat::zeros(self.rows, other.cols);
        mul_into(&self.data, &other.data, &mut out.data, self.rows, self.cols, other.cols);
        Ok(out)
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Determinant by partial-pivot LU. Square matrices only.
    pub fn det(&self) -> f64 {
        assert_eq!(self.rows, self.cols, "det of non-square matrix");
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
                .unwrap_or(k);
            if a[p * n + k] == 0.0 {
                return 0.0;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                det = -det;
            }
            let pivot = a[k * n + k];
            det *= pivot;
            for i in k + 1..n {
                let f = a[i * n + k] / pivot;
                for j in k..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
            }
        }
        det
    }

    pub fn symmetrize(&mut self) {
        assert_eq!(self.rows, self.cols);
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                let avg = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = avg;
                self[(j, i)] = avg;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        singular_values(self).first().copied().unwrap_or(0.0)
    }
}

/// `out = a * b` for row-major slices, `a` is `m x k`, `b` is `k x n`.
#[inline]
pub fn mul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for l in 0..k {
                acc += a[i * k + l] * b[l * n + j];
            }
            out[i * n + j] = acc;
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", &self.data[i * self.cols..(i + 1) * self.cols])?;
        }
        write!(f, "]")
    }
}

/// Real parts of the eigenvalues of a 2x2 matrix, larger first.
pub fn eig2_real_parts(m: &Mat) -> (f64, f64) {
    assert_eq!(m.shape(), (2, 2), "eig2_real_parts needs a 2x2 matrix");
    let tr = m.trace();
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = 0.25 * tr * tr - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        (0.5 * tr + s, 0.5 * tr - s)
    } else {
        (0.5 * tr, 0.5 * tr)
    }
}

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi rotations,
/// sorted descending. Off-diagonal entries are annihilated until
/// `|a_pq| <= tol * sqrt(|a_pp a_qq|)` for every pair.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    assert_eq!(m.rows, m.cols, "sym_eigenvalues of non-square matrix");
    let n = m.rows;
    let mut a = m.clone();
    a.symmetrize();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[(p, p)], a[(q, q)]);
                if apq.abs() <= JACOBI_TOL * (app * aqq).abs().sqrt() {
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
            }
        }
        if !rotated {
            break;
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Singular values of an `m x n` matrix by one-sided (Hestenes) Jacobi
/// orthogonalization of its columns, sorted descending. Accurate relative to
/// each singular value when the column-scaled matrix is well conditioned.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    let (rows, cols) = m.shape();
    // column-major working copy
    let mut colv: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| m[(i, j)]).collect()).collect();
    one_sided_jacobi(&mut colv);
    let mut sv: Vec<f64> = colv.iter().map(|c| dot(c, c).sqrt()).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Orthogonalizes the given columns in place. On return the column norms
/// are the singular values of the matrix they form.
pub fn one_sided_jacobi(cols: &mut [Vec<f64>]) {
    let n = cols.len();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    (dot(cp, cp), dot(cq, cq), dot(cp, cq))
                };
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                let (cp, cq) = (&mut left[p], &mut right[0]);
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
}

/// A first-order ODE `dx/dt = f(t, x)` over a flat state vector.
pub trait OdeSystem {
    fn dimension(&self) -> usize;

    fn rhs(&self, t: f64, state: &[f64], out: &mut [f64]);
}

/// Closure-backed [`OdeSystem`].
pub struct FnSystem<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64])> FnSystem<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(f64, &[f64], &mut [f64])> OdeSystem for FnSystem<F> {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn rhs(&self, t: f64, state: &[f64], out: &mut [f64]) {
        (self.f)(t, state, out)
    }
}

/// Classical fourth-order Runge-Kutta with reusable stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `state` from `t` to `t + dt` in place.
    pub fn step<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        t: f64,
        state: &mut [f64],
        dt: f64,
    ) -> Result<(), NumericsError> {
        self.check(sys, state)?;
        sys.rhs(t, state, &mut self.k1);
        finite(&self.k1, t)?;
        self.stages(sys, t, state, dt)
    }

    /// As [`Rk4::step`], with the slope at `(t, state)` supplied by the caller.
    pub fn step_with_slope<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        t: f64,
        state: &mut [f64],
        slope: &[f64],
        dt: f64,
    ) -> Result<(), NumericsError> {
        self.check(sys, state)?;
        self.k1.copy_from_slice(slope);
        finite(&self.k1, t)?;
        self.stages(sys, t, state, dt)
    }

    fn check<S: OdeSystem + ?Sized>(&self, sys: &S, state: &[f64]) -> Result<(), NumericsError> {
        if state.len() != sys.dimension() || state.len() != self.k1.len() {
            return Err(NumericsError::Dimension {
                expected: sys.dimension(),
                got: state.len(),
            });
        }
        Ok(())
    }

    fn stages<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        t: f64,
        state: &mut [f64],
        dt: f64,
    ) -> Result<(), NumericsError> {
        let half = 0.5 * dt;
        axpy_into(&mut self.tmp, state, half, &self.k1);
        sys.rhs(t + half, &self.tmp, &mut self.k2);
        finite(&self.k2, t + half)?;
        axpy_into(&mut self.tmp, state, half, &self.k2);
        sys.rhs(t + half, &self.tmp, &mut self.k3);
        finite(&self.k3, t + half)?;
        axpy_into(&mut self.tmp, state, dt, &self.k3);
        sys.rhs(t + dt, &self.tmp, &mut self.k4);
        finite(&self.k4, t + dt)?;
        let w = dt / 6.0;
        for (i, s) in state.iter_mut().enumerate() {
            *s += w * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

/// One classical RK4 step returning the new state.
pub fn rk4_step<S: OdeSystem + ?Sized>(sys: &S, t: f64, state: &[f64], dt: f64) -> Result<Vec<f64>, NumericsError> {
    let mut next = state.to_vec();
    Rk4::new(state.len()).step(sys, t, &mut next, dt)?;
    Ok(next)
}

#[inline]
fn axpy_into(out: &mut [f64], x: &[f64], a: f64, y: &[f64]) {
    for ((o, &xi), &yi) in out.iter_mut().zip(x).zip(y) {
        *o = xi + a * yi;
    }
}

fn finite(v: &[f64], t: f64) -> Result<(), NumericsError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(NumericsError::NonFinite { t })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn identity_times_vector() {
        let v = Mat::column(&[1.5, -2.0]);
        assert_eq!(Mat::identity(2).matmul(&v).unwrap(), v);
    }

    #[test]
    fn transpose_of_a0_at_zero() {
        let a0 = Mat::from_rows(&[&[1.0, -1.0], &[5.0, -4.0]]);
        assert_eq!(a0.transpose(), Mat::from_rows(&[&[1.0, 5.0], &[-1.0, -4.0]]));
    }

    #[test]
    fn matmul_by_hand() {
        let a = Mat::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = Mat::column(&[5.0, 6.0]);
        assert_eq!(a.matmul(&b).unwrap(), Mat::column(&[17.0, 39.0]));
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let a = Mat::zeros(2, 3);
        let b = Mat::zeros(2, 2);
        let err = a.matmul(&b).unwrap_err();
        assert_eq!(
            err,
            NumericsError::Shape {
                op: "matmul",
                lhs: (2, 3),
                rhs: (2, 2)
            }
        );
        assert!(err.to_string().contains("(2, 3)"));
        assert!(a.add(&b).is_err());
        assert!(a.sub(&b).is_err());
    }

    #[test]
    fn eig2_examples() {
        let (l1, l2) = eig2_real_parts(&Mat::from_rows(&[&[1.0, -1.0], &[5.0, -4.0]]));
        // roots of l^2 + 3l + 1
        assert_abs_diff_eq!(l1, (-3.0 + 5f64.sqrt()) / 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(l2, (-3.0 - 5f64.sqrt()) / 2.0, epsilon = 1e-14);
        assert_eq!(eig2_real_parts(&Mat::zeros(2, 2)), (0.0, 0.0));
        assert_eq!(eig2_real_parts(&Mat::diag(&[-1.0, -2.0])), (-1.0, -2.0));
        // complex pair
        let (r1, r2) = eig2_real_parts(&Mat::from_rows(&[&[-1.0, 2.0], &[-2.0, -1.0]]));
        assert_eq!((r1, r2), (-1.0, -1.0));
    }

    #[test]
    fn determinant() {
        let m = Mat::from_rows(&[&[2.0, 1.0, 0.0], &[1.0, 3.0, 1.0], &[0.0, 1.0, 4.0]]);
        assert_abs_diff_eq!(m.det(), 18.0, epsilon = 1e-12);
        assert_eq!(Mat::zeros(2, 2).det(), 0.0);
    }

    #[test]
    fn jacobi_on_known_spectrum() {
        // rotation of diag(5, 2, -1)
        let d = Mat::diag(&[5.0, 2.0, -1.0]);
        let (c, s) = (0.6f64, 0.8f64);
        let q = Mat::from_rows(&[&[c, -s, 0.0], &[s, c, 0.0], &[0.0, 0.0, 1.0]]);
        let m = q.matmul(&d).unwrap().matmul(&q.transpose()).unwrap();
        let ev = sym_eigenvalues(&m);
        for (got, want) in ev.iter().zip([5.0, 2.0, -1.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        let sv = singular_values(&m);
        for (got, want) in sv.iter().zip([5.0, 2.0, 1.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn spectral_norm_of_nonsymmetric() {
        let m = Mat::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
        // sigma_max = golden ratio
        assert_abs_diff_eq!(m.spectral_norm(), (1.0 + 5f64.sqrt()) / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn rk4_zero_rhs_keeps_state() {
        let sys = FnSystem::new(3, |_, _, out: &mut [f64]| out.fill(0.0));
        let s = [1.0, -2.0, 3.5];
        assert_eq!(rk4_step(&sys, 0.0, &s, 0.1).unwrap(), s.to_vec());
    }

    #[test]
    fn rk4_exponential() {
        let sys = FnSystem::new(1, |_, x: &[f64], out: &mut [f64]| out[0] = x[0]);
        let mut rk = Rk4::new(1);
        let mut x = [1.0];
        let dt = 1e-3;
        for i in 0..1000 {
            rk.step(&sys, i as f64 * dt, &mut x, dt).unwrap();
        }
        assert!((x[0] - std::f64::consts::E).abs() < 1e-9);
    }

    #[test]
    fn rk4_cosine_quadrature() {
        let sys = FnSystem::new(1, |t, _: &[f64], out: &mut [f64]| out[0] = t.cos());
        let mut rk = Rk4::new(1);
        let steps = (std::f64::consts::PI / 1e-3).round() as usize;
        let dt = std::f64::consts::PI / steps as f64;
        let mut x = [0.0];
        for i in 0..steps {
            rk.step(&sys, i as f64 * dt, &mut x, dt).unwrap();
        }
        assert!(x[0].abs() < 1e-9);
    }

    #[test]
    fn rk4_reports_non_finite_time() {
        let sys = FnSystem::new(1, |t, _: &[f64], out: &mut [f64]| {
            out[0] = if t >= 0.05 { f64::NAN } else { 1.0 }
        });
        let err = rk4_step(&sys, 0.0, &[0.0], 0.1).unwrap_err();
        assert_eq!(err, NumericsError::NonFinite { t: 0.05 });
        assert!(matches!(
            rk4_step(&sys, 0.0, &[0.0, 1.0], 0.1),
            Err(NumericsError::Dimension { .. })
        ));
    }

    proptest! {
        #[test]
        fn matmul_is_associative(v in prop::collection::vec(-10.0..10.0f64, 12)) {
            let a = Mat::from_row_major(2, 2, v[0..4].to_vec());
            let b = Mat::from_row_major(2, 2, v[4..8].to_vec());
            let c = Mat::from_row_major(2, 2, v[8..12].to_vec());
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            prop_assert!(left.sub(&right).unwrap().max_abs() < 1e-12);
        }

        #[test]
        fn jacobi_routes_agree_on_gram(v in prop::collection::vec(-1.0..1.0f64, 40)) {
            // Gram of a random 10x4 sample matrix: eigenvalues = squared singular values
            let s = Mat::from_row_major(10, 4, v);
            let g = s.transpose().matmul(&s).unwrap();
            let ev = sym_eigenvalues(&g);
            let sv = singular_values(&s);
            for (e, s) in ev.iter().zip(&sv) {
                prop_assert!((e - s * s).abs() < 1e-10 * (1.0 + e.abs()));
            }
            prop_assert!(ev[ev.len() - 1] >= -1e-12);
        }
    }
}
