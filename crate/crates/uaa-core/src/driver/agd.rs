//! Accelerated gradient baseline with backtracking; handles the composite
//! case through the proximal mapping (the classical fast
//! shrinkage-thresholding scheme when the nonsmooth term is present).

use std::time::Instant;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::problem::{gradient_mapping_norm, CompositeProblem};

use super::{Phase, RunDiagnostics, RunStatus, RunTrace, Solution, TraceRecord, MAP_ALPHA};

#[derive(Debug, Clone)]
pub struct AgdBaselineParams {
    /// Initial inverse step size (Lipschitz estimate), grown by backtracking.
    pub l0: f64,
    pub grad_map_tol: f64,
    pub max_iters: usize,
    /// Reset momentum whenever the objective increases.
    pub restart: bool,
}

impl Default for AgdBaselineParams {
    fn default() -> Self {
        Self {
            l0: 1.0,
            grad_map_tol: 1e-9,
            max_iters: 100_000,
            restart: true,
        }
    }
}

/// Momentum proximal-gradient run down to the gradient-mapping tolerance.
pub fn agd_baseline(
    problem: &CompositeProblem,
    x0: &DVector<f64>,
    params: &AgdBaselineParams,
) -> Result<Solution> {
    if params.l0 <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "l0 {} must be positive",
            params.l0
        )));
    }
    let oracle = problem.oracle_arc();
    let mut records = Vec::new();
    let mut x = x0.clone();
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut l = params.l0;
    let mut f_x = problem.objective(&x);
    let mut status = RunStatus::IterCap;

    let mut gm = gradient_mapping_norm(problem, &x, MAP_ALPHA);
    if gm <= params.grad_map_tol {
        status = RunStatus::Converged;
    } else {
        for i in 0..params.max_iters {
            let started = Instant::now();
            let grad_y = oracle.gradient(&y);
            let f_y = oracle.value(&y);
            let mut inner = 1usize;
            let cand = loop {
                let cand = problem.prox(&(&y - &grad_y / l), 1.0 / l);
                let diff = &cand - &y;
                let quad = f_y + grad_y.dot(&diff) + 0.5 * l * diff.norm_squared();
                if oracle.value(&cand) <= quad + 1e-12 * (1.0 + quad.abs()) {
                    break cand;
                }
                l *= 2.0;
                inner += 1;
                if l > 1e18 {
                    return Err(Error::NonFinite("gradient baseline backtracking diverged"));
                }
            };
            let f_cand = problem.objective(&cand);

            let accepted = !(params.restart && f_cand > f_x);
            let step_norm;
            if accepted {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                y = &cand + (&cand - &x) * ((t - 1.0) / t_next);
                t = t_next;
                step_norm = (&cand - &x).norm();
                x = cand;
                f_x = f_cand;
            } else {
                // objective went up: drop momentum and restart from x
                y = x.clone();
                t = 1.0;
                step_norm = 0.0;
            }

            gm = gradient_mapping_norm(problem, &x, MAP_ALPHA);
            records.push(TraceRecord {
                i,
                phase: Phase::Agd,
                success: accepted,
                f: f_x,
                grad_map: gm,
                sigma: l,
                tau: None,
                step_norm,
                inner_iters: inner,
                theta: None,
                wall_ns: started.elapsed().as_nanos(),
            });
            if gm <= params.grad_map_tol {
                status = RunStatus::Converged;
                break;
            }
        }
    }

    let f = problem.objective(&x);
    Ok(Solution {
        x,
        f,
        status,
        trace: RunTrace { records },
        diagnostics: RunDiagnostics::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{L1Reg, ProxTerm, QuadraticOracle, SmoothOracle};
    use nalgebra::{DMatrix, DVector};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    #[test]
    fn classical_rate_bound_holds_with_known_lipschitz() {
        // F(x_k) - F* <= 2 L ||x0 - x*||^2 / (k+1)^2 for the no-restart run
        // with the exact Lipschitz constant.
        let mut rng = ChaCha8Rng::seed_from_u64(95);
        let d = 8;
        let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
        let q = &a * a.transpose() / d as f64 + DMatrix::identity(d, d);
        let lips = nalgebra::SymmetricEigen::new(q.clone()).eigenvalues.max();
        let b = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let x_star = q.clone().cholesky().unwrap().solve(&(-&b));
        let oracle = QuadraticOracle::new(q, b, 0.0).unwrap();
        let fstar = oracle.value(&x_star);
        let problem = CompositeProblem::smooth(Arc::new(oracle));
        let x0 = DVector::from_fn(d, |_, _| rng.gen_range(-4.0..4.0));
        let r2 = (&x0 - &x_star).norm_squared();

        let params = AgdBaselineParams {
            l0: lips,
            restart: false,
            max_iters: 2000,
            ..Default::default()
        };
        let out = agd_baseline(&problem, &x0, &params).unwrap();
        for (idx, rec) in out.trace.records.iter().enumerate() {
            let k = idx + 1;
            let bound = 2.0 * lips * r2 / ((k + 1) * (k + 1)) as f64;
            assert!(
                rec.f - fstar <= bound + 1e-12,
                "k = {k}: {} > {bound}",
                rec.f - fstar
            );
        }
    }

    #[test]
    fn lasso_toy_reaches_soft_threshold_solution() {
        // f = ||x - v||^2 / 2, r = lambda ||x||_1: solution is the
        // componentwise soft threshold of v at level lambda.
        let v = DVector::from_vec(vec![1.4, -0.2]);
        let lambda = 0.5;
        let oracle = QuadraticOracle::new(DMatrix::identity(2, 2), -v.clone(), 0.0).unwrap();
        let r: Arc<dyn ProxTerm> = Arc::new(L1Reg::new(lambda).unwrap());
        let problem = CompositeProblem::with_nonsmooth(Arc::new(oracle), r);
        let params = AgdBaselineParams {
            grad_map_tol: 1e-12,
            ..Default::default()
        };
        let out = agd_baseline(&problem, &DVector::zeros(2), &params).unwrap();
        assert_eq!(out.status, RunStatus::Converged);
        let expected = DVector::from_vec(vec![0.9, 0.0]);
        assert!((out.x - expected).norm() <= 1e-9);
    }

    #[test]
    fn zero_gradient_start_converges_immediately() {
        let q = DMatrix::identity(3, 3);
        let oracle = QuadraticOracle::new(q, DVector::zeros(3), 1.0).unwrap();
        let fstar = oracle.value(&DVector::zeros(3));
        let problem = CompositeProblem::smooth(Arc::new(oracle));
        let out =
            agd_baseline(&problem, &DVector::zeros(3), &AgdBaselineParams::default()).unwrap();
        assert_eq!(out.status, RunStatus::Converged);
        assert!(out.trace.records.is_empty());
        assert_eq!(out.f, fstar);
    }
}
