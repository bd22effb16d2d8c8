//! Seeded synthetic problem instances.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use uaa_core::problem::{CompositeProblem, Dataset, LogSumExpOracle, QuadraticOracle};

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// A strongly convex quadratic with eigenvalues in roughly [1, 5] and a known
/// minimizer, kept around for bound replays.
pub struct QuadraticInstance {
    pub oracle: Arc<QuadraticOracle>,
    pub x_star: DVector<f64>,
    pub fstar: f64,
}

impl QuadraticInstance {
    pub fn problem(&self) -> CompositeProblem {
        CompositeProblem::smooth(self.oracle.clone())
    }
}

pub fn synth_quadratic(d: usize, seed: u64) -> QuadraticInstance {
    let mut rng = rng_for(seed);
    let a = DMatrix::from_fn(d, d, |_, _| normal(&mut rng));
    let q = &a * a.transpose() / d as f64 + DMatrix::identity(d, d);
    let b = DVector::from_fn(d, |_, _| normal(&mut rng));
    let x_star = q
        .clone()
        .cholesky()
        .expect("SPD by construction")
        .solve(&(-&b));
    let oracle = QuadraticOracle::new(q, b, 0.0).expect("symmetric by construction");
    let fstar = {
        use uaa_core::problem::SmoothOracle;
        oracle.value(&x_star)
    };
    QuadraticInstance {
        oracle: Arc::new(oracle),
        x_star,
        fstar,
    }
}

/// Dense binary-classification data from a planted separator with 10% label
/// noise; rows are stored sparsely like parsed LIBSVM data.
pub fn synth_dataset(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = rng_for(seed.wrapping_add(1));
    let w: DVector<f64> = DVector::from_fn(d, |_, _| normal(&mut rng));
    let scale = 1.0 / (d as f64).sqrt();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let features: Vec<(usize, f64)> = (0..d).map(|j| (j, normal(&mut rng) * scale)).collect();
        let margin: f64 = features.iter().map(|&(j, v)| v * w[j]).sum();
        let mut label = if margin >= 0.0 { 1.0 } else { -1.0 };
        if rng.gen_bool(0.1) {
            label = -label;
        }
        rows.push(features);
        labels.push(label);
    }
    Dataset::new(rows, labels, d).expect("generated rows are valid")
}

/// A log-sum-exp objective over `terms` random affine pieces; smooth convex
/// with third-order information, used for the order-3 runs.
pub fn synth_logsumexp(terms: usize, d: usize, seed: u64) -> Arc<LogSumExpOracle> {
    let mut rng = rng_for(seed.wrapping_add(2));
    let scale = 1.0 / (d as f64).sqrt();
    let a = DMatrix::from_fn(terms, d, |_, _| normal(&mut rng) * scale);
    let b = DVector::from_fn(terms, |_, _| normal(&mut rng) * 0.5);
    Arc::new(LogSumExpOracle::new(a, b).expect("dimensions consistent"))
}

/// Gaussian starting point with the requested standard deviation.
pub fn gaussian_start(d: usize, scale: f64, seed: u64) -> DVector<f64> {
    let mut rng = rng_for(seed.wrapping_add(0x9e3779b97f4a7c15));
    DVector::from_fn(d, |_, _| normal(&mut rng) * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use uaa_core::problem::SmoothOracle;

    #[test]
    fn quadratic_instance_is_consistent() {
        let inst = synth_quadratic(6, 42);
        assert!(inst.oracle.gradient(&inst.x_star).norm() <= 1e-10);
        assert!((inst.oracle.value(&inst.x_star) - inst.fstar).abs() <= 1e-15);
        // repeatable
        let again = synth_quadratic(6, 42);
        assert_eq!(inst.x_star, again.x_star);
    }

    #[test]
    fn dataset_generation_is_deterministic() {
        let a = synth_dataset(20, 5, 3);
        let b = synth_dataset(20, 5, 3);
        assert_eq!(a, b);
        assert_eq!(a.n(), 20);
        assert_eq!(a.dim(), 5);
    }

    #[test]
    fn start_points_differ_by_seed() {
        let a = gaussian_start(4, 1.0, 1);
        let b = gaussian_start(4, 1.0, 2);
        assert_ne!(a, b);
        assert_eq!(a, gaussian_start(4, 1.0, 1));
    }
}
