//! Adaptive cubic-regularization baseline: plain ratio-test acceptance with
//! the shared sigma machinery and subproblem solver.

use std::time::Instant;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{EffectiveModel, RegularizedModel};
use crate::problem::CompositeProblem;

use super::{
    eps_step, solve_smooth_cubic, Phase, RunDiagnostics, RunStatus, RunTrace, Solution, TraceRecord,
};

#[derive(Debug, Clone)]
pub struct ArcParams {
    pub sigma0: f64,
    pub sigma_min: f64,
    pub gamma1: f64,
    /// Acceptance threshold on the actual-vs-predicted reduction ratio.
    pub eta1: f64,
    /// Threshold above which sigma is relaxed.
    pub eta2: f64,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub kappa_theta: f64,
    pub lanczos_max_dim: usize,
}

impl Default for ArcParams {
    fn default() -> Self {
        Self {
            sigma0: 1.0,
            sigma_min: 1e-8,
            gamma1: 2.0,
            eta1: 0.1,
            eta2: 0.9,
            grad_tol: 1e-9,
            max_iters: 1000,
            kappa_theta: 0.5,
            lanczos_max_dim: usize::MAX,
        }
    }
}

/// Core loop shared by the standalone baseline and the hybrid tail; trace
/// records carry `phase` and continue the caller's iteration numbering.
pub(super) fn arc_run(
    problem: &CompositeProblem,
    x0: &DVector<f64>,
    params: &ArcParams,
    phase: Phase,
    start_i: usize,
) -> Result<(DVector<f64>, RunStatus, Vec<TraceRecord>)> {
    if problem.has_nonsmooth() {
        return Err(Error::InvalidArgument(
            "cubic-regularization baseline needs a smooth problem".into(),
        ));
    }
    let oracle = problem.oracle_arc();
    let mut records = Vec::new();
    let mut x = x0.clone();
    let mut sigma = params.sigma0.max(params.sigma_min);
    let mut grad = oracle.gradient(&x);
    let mut f_x = oracle.value(&x);
    let mut i = start_i;

    for _ in 0..params.max_iters {
        if grad.norm() <= params.grad_tol {
            return Ok((x, RunStatus::Converged, records));
        }
        let started = Instant::now();
        let model = EffectiveModel::exact_hessian(&oracle, &x)?;
        let res = solve_smooth_cubic(
            problem,
            &model,
            sigma,
            params.kappa_theta,
            params.lanczos_max_dim,
        )?;
        let step_norm = (&res.x_bar - &x).norm();

        if step_norm <= eps_step(&x) {
            // gradient is above tolerance but the model refuses to move;
            // tighten the model and retry
            records.push(TraceRecord {
                i,
                phase,
                success: false,
                f: f_x,
                grad_map: grad.norm(),
                sigma,
                tau: None,
                step_norm,
                inner_iters: res.inner_iters,
                theta: None,
                wall_ns: started.elapsed().as_nanos(),
            });
            i += 1;
            sigma *= params.gamma1;
            continue;
        }
        if !res.is_satisfied() {
            return Ok((x, RunStatus::SubsolveFail, records));
        }

        let f_trial = oracle.value(&res.x_bar);
        let reg = RegularizedModel::new(&model, sigma, problem);
        let predicted = f_x - reg.value(&res.x_bar);
        let rho = if predicted > 0.0 {
            (f_x - f_trial) / predicted
        } else {
            f64::NEG_INFINITY
        };
        let success = rho >= params.eta1;

        if success {
            x = res.x_bar;
            f_x = f_trial;
            grad = oracle.gradient(&x);
        }
        records.push(TraceRecord {
            i,
            phase,
            success,
            f: f_x,
            grad_map: grad.norm(),
            sigma,
            tau: None,
            step_norm,
            inner_iters: res.inner_iters,
            theta: None,
            wall_ns: started.elapsed().as_nanos(),
        });
        i += 1;
        if success {
            if rho >= params.eta2 {
                sigma = (sigma / params.gamma1).max(params.sigma_min);
            }
        } else {
            sigma *= params.gamma1;
        }
    }
    Ok((x, RunStatus::IterCap, records))
}

/// Standalone adaptive cubic-regularization run down to `grad_tol`.
pub fn arc_baseline(
    problem: &CompositeProblem,
    x0: &DVector<f64>,
    params: &ArcParams,
) -> Result<Solution> {
    let (x, status, records) = arc_run(problem, x0, params, Phase::Arc, 0)?;
    let f = problem.objective(&x);
    Ok(Solution {
        x,
        f,
        status,
        trace: RunTrace { records },
        diagnostics: RunDiagnostics::default(),
    })
}
