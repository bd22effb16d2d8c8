//! Analytic oracles used as benchmark objectives and test instances.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::SmoothOracle;

/// `f(x) = x^T Q x / 2 + b^T x + c` with symmetric `Q`.
#[derive(Clone)]
pub struct QuadraticOracle {
    q: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
}

impl QuadraticOracle {
    pub fn new(q: DMatrix<f64>, b: DVector<f64>, c: f64) -> Result<Self> {
        if q.nrows() != q.ncols() || q.nrows() != b.len() {
            return Err(Error::InvalidArgument(
                "quadratic dimensions mismatch".into(),
            ));
        }
        let asym = (&q - q.transpose()).norm();
        if asym > 1e-12 * (1.0 + q.norm()) {
            return Err(Error::InvalidArgument(
                "quadratic matrix not symmetric".into(),
            ));
        }
        Ok(Self { q, b, c })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.b
    }
}

impl SmoothOracle for QuadraticOracle {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.b.dot(x) + self.c
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.q * x + &self.b
    }

    fn hessian_vec(&self, _x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        &self.q * v
    }

    fn full_hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.q.clone())
    }

    fn third_contract(&self, _x: &DVector<f64>, _v: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::zeros(self.dim()))
    }

    fn order(&self) -> usize {
        3
    }
}

/// `f(x) = ln sum_k exp(a_k^T x + b_k)`, smooth convex with derivatives of all
/// orders; derivatives up to third order are exposed (they are the central
/// moments of the softmax distribution over the rows of `A`).
#[derive(Clone)]
pub struct LogSumExpOracle {
    a: DMatrix<f64>, // k x d, one row per term
    b: DVector<f64>,
}

impl LogSumExpOracle {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() || a.nrows() == 0 {
            return Err(Error::InvalidArgument(
                "log-sum-exp dimensions mismatch".into(),
            ));
        }
        Ok(Self { a, b })
    }

    /// Softmax weights of `A x + b`.
    fn softmax(&self, x: &DVector<f64>) -> DVector<f64> {
        let z = &self.a * x + &self.b;
        let zmax = z.max();
        let e = z.map(|zi| (zi - zmax).exp());
        let total = e.sum();
        e / total
    }
}

impl SmoothOracle for LogSumExpOracle {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let z = &self.a * x + &self.b;
        let zmax = z.max();
        zmax + z.map(|zi| (zi - zmax).exp()).sum().ln()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.a.transpose() * self.softmax(x)
    }

    fn hessian_vec(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let w = self.softmax(x);
        let av = &self.a * v; // per-term directional derivative
        let mean = w.dot(&av);
        let coeff = DVector::from_fn(w.len(), |k, _| w[k] * (av[k] - mean));
        self.a.transpose() * coeff
    }

    fn full_hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let w = self.softmax(x);
        let d = self.dim();
        let g = self.a.transpose() * &w;
        let mut h = DMatrix::zeros(d, d);
        for k in 0..w.len() {
            let row = self.a.row(k).transpose();
            h += (&row * row.transpose()) * w[k];
        }
        h -= &g * g.transpose();
        Some(h)
    }

    fn third_contract(&self, x: &DVector<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
        // Third central moment of the softmax distribution, contracted twice
        // with v: sum_k w_k (a_k^T v - mean)^2 (a_k - gbar).
        let w = self.softmax(x);
        let av = &self.a * v;
        let mean = w.dot(&av);
        let gbar = self.a.transpose() * &w;
        let mut out = DVector::zeros(self.dim());
        for k in 0..w.len() {
            let dev = av[k] - mean;
            let coeff = w[k] * dev * dev;
            out += (self.a.row(k).transpose() - &gbar) * coeff;
        }
        Some(out)
    }

    fn order(&self) -> usize {
        3
    }
}

/// `f(x) = exp(a^T x)`, a convex function with simple closed-form tensors.
#[derive(Clone)]
pub struct ExpInnerOracle {
    a: DVector<f64>,
}

impl ExpInnerOracle {
    pub fn new(a: DVector<f64>) -> Self {
        Self { a }
    }
}

impl SmoothOracle for ExpInnerOracle {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.a.dot(x).exp()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * self.value(x)
    }

    fn hessian_vec(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        &self.a * (self.value(x) * self.a.dot(v))
    }

    fn full_hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(&self.a * self.a.transpose() * self.value(x))
    }

    fn third_contract(&self, x: &DVector<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
        let t = self.a.dot(v);
        Some(&self.a * (self.value(x) * t * t))
    }

    fn order(&self) -> usize {
        3
    }
}

/// `f(x) = x^T Q x / 2 + b^T x + (gamma/6)(u^T x)^3`.
///
/// The third derivative tensor is constant (`T[a,b,c] = gamma (u^T a)(u^T b)(u^T c)`),
/// so the second-derivative Lipschitz constant is exactly `|gamma| ||u||^3` and the
/// third-order Taylor expansion is exact. Not convex in general.
#[derive(Clone)]
pub struct CubicPolyOracle {
    q: DMatrix<f64>,
    b: DVector<f64>,
    u: DVector<f64>,
    gamma: f64,
}

impl CubicPolyOracle {
    pub fn new(q: DMatrix<f64>, b: DVector<f64>, u: DVector<f64>, gamma: f64) -> Result<Self> {
        if q.nrows() != q.ncols() || q.nrows() != b.len() || b.len() != u.len() {
            return Err(Error::InvalidArgument(
                "cubic polynomial dimensions mismatch".into(),
            ));
        }
        Ok(Self { q, b, u, gamma })
    }

    /// Lipschitz constant of the Hessian, exact from the coefficients.
    pub fn hessian_lipschitz(&self) -> f64 {
        self.gamma.abs() * self.u.norm().powi(3)
    }
}

impl SmoothOracle for CubicPolyOracle {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let t = self.u.dot(x);
        0.5 * x.dot(&(&self.q * x)) + self.b.dot(x) + self.gamma / 6.0 * t * t * t
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let t = self.u.dot(x);
        &self.q * x + &self.b + &self.u * (0.5 * self.gamma * t * t)
    }

    fn hessian_vec(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let t = self.u.dot(x);
        &self.q * v + &self.u * (self.gamma * t * self.u.dot(v))
    }

    fn full_hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let t = self.u.dot(x);
        Some(&self.q + &self.u * self.u.transpose() * (self.gamma * t))
    }

    fn third_contract(&self, _x: &DVector<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
        let t = self.u.dot(v);
        Some(&self.u * (self.gamma * t * t))
    }

    fn order(&self) -> usize {
        3
    }
}

/// Wrapper that counts oracle calls; used by tests that pin evaluation budgets.
pub struct CountingOracle<O> {
    inner: O,
    values: AtomicUsize,
    gradients: AtomicUsize,
    hessian_vecs: AtomicUsize,
}

impl<O: SmoothOracle> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            values: AtomicUsize::new(0),
            gradients: AtomicUsize::new(0),
            hessian_vecs: AtomicUsize::new(0),
        }
    }

    pub fn value_calls(&self) -> usize {
        self.values.load(Ordering::Relaxed)
    }

    pub fn gradient_calls(&self) -> usize {
        self.gradients.load(Ordering::Relaxed)
    }

    pub fn hessian_vec_calls(&self) -> usize {
        self.hessian_vecs.load(Ordering::Relaxed)
    }
}

impl<O: SmoothOracle> SmoothOracle for CountingOracle<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.values.fetch_add(1, Ordering::Relaxed);
        self.inner.value(x)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.gradients.fetch_add(1, Ordering::Relaxed);
        self.inner.gradient(x)
    }

    fn hessian_vec(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.hessian_vecs.fetch_add(1, Ordering::Relaxed);
        self.inner.hessian_vec(x, v)
    }

    fn full_hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.inner.full_hessian(x)
    }

    fn third_contract(&self, x: &DVector<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
        self.inner.third_contract(x, v)
    }

    fn order(&self) -> usize {
        self.inner.order()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> DVector<f64> {
        DVector::from_fn(d, |_, _| rng.gen_range(-scale..scale))
    }

    fn check_gradient(oracle: &dyn SmoothOracle, x: &DVector<f64>) {
        let g = oracle.gradient(x);
        let h = 1e-6;
        for j in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fd = (oracle.value(&xp) - oracle.value(&xm)) / (2.0 * h);
            assert!(
                (g[j] - fd).abs() <= 1e-6 * (1.0 + g.norm()),
                "component {j}: {} vs {}",
                g[j],
                fd
            );
        }
    }

    fn check_third_contract(oracle: &dyn SmoothOracle, x: &DVector<f64>, v: &DVector<f64>) {
        // T[v,v] against a central difference of Hessian-vector products.
        let t = oracle.third_contract(x, v).unwrap();
        let h = 1e-5;
        let hp = oracle.hessian_vec(&(x + v * h), v);
        let hm = oracle.hessian_vec(&(x - v * h), v);
        let fd = (hp - hm) / (2.0 * h);
        assert!((t - fd).norm() <= 1e-4 * (1.0 + v.norm_squared()));
    }

    #[test]
    fn quadratic_oracle_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let q = &a * a.transpose() + DMatrix::identity(4, 4);
        let oracle = QuadraticOracle::new(q, random_vec(&mut rng, 4, 1.0), 0.3).unwrap();
        for _ in 0..10 {
            check_gradient(&oracle, &random_vec(&mut rng, 4, 2.0));
        }
        assert!(
            oracle
                .third_contract(&DVector::zeros(4), &random_vec(&mut rng, 4, 1.0))
                .unwrap()
                .norm()
                == 0.0
        );
    }

    #[test]
    fn quadratic_rejects_asymmetric_matrix() {
        let mut q = DMatrix::identity(2, 2);
        q[(0, 1)] = 0.5;
        assert!(QuadraticOracle::new(q, DVector::zeros(2), 0.0).is_err());
    }

    #[test]
    fn log_sum_exp_oracle_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = DMatrix::from_fn(7, 5, |_, _| rng.gen_range(-1.0..1.0));
        let b = random_vec(&mut rng, 7, 0.5);
        let oracle = LogSumExpOracle::new(a, b).unwrap();
        for _ in 0..10 {
            let x = random_vec(&mut rng, 5, 1.5);
            let v = random_vec(&mut rng, 5, 1.0);
            check_gradient(&oracle, &x);
            check_third_contract(&oracle, &x, &v);
            // hessian_vec agrees with the materialized Hessian
            let h = oracle.full_hessian(&x).unwrap();
            assert!((&h * &v - oracle.hessian_vec(&x, &v)).norm() <= 1e-10);
            // PSD: lse Hessian is a covariance matrix
            assert!(v.dot(&(&h * &v)) >= -1e-12);
        }
    }

    #[test]
    fn log_sum_exp_is_stable_far_out() {
        let a = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let oracle = LogSumExpOracle::new(a, DVector::zeros(2)).unwrap();
        let x = DVector::from_vec(vec![900.0]);
        assert!((oracle.value(&x) - 900.0).abs() < 1e-9);
        assert!(oracle.gradient(&x).norm().is_finite());
    }

    #[test]
    fn exp_inner_oracle_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let oracle = ExpInnerOracle::new(random_vec(&mut rng, 3, 0.8));
        for _ in 0..10 {
            let x = random_vec(&mut rng, 3, 0.5);
            let v = random_vec(&mut rng, 3, 1.0);
            check_gradient(&oracle, &x);
            check_third_contract(&oracle, &x, &v);
        }
    }

    #[test]
    fn cubic_poly_oracle_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let a = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let q = &a * a.transpose();
        let oracle = CubicPolyOracle::new(
            q,
            random_vec(&mut rng, 4, 1.0),
            random_vec(&mut rng, 4, 1.0),
            0.7,
        )
        .unwrap();
        for _ in 0..10 {
            let x = random_vec(&mut rng, 4, 1.0);
            let v = random_vec(&mut rng, 4, 1.0);
            check_gradient(&oracle, &x);
            check_third_contract(&oracle, &x, &v);
        }
    }

    #[test]
    fn counting_oracle_tracks_calls() {
        let oracle = CountingOracle::new(ExpInnerOracle::new(DVector::from_vec(vec![1.0])));
        let x = DVector::zeros(1);
        oracle.value(&x);
        oracle.gradient(&x);
        oracle.gradient(&x);
        assert_eq!(oracle.value_calls(), 1);
        assert_eq!(oracle.gradient_calls(), 2);
        assert_eq!(oracle.hessian_vec_calls(), 0);
    }
}
