//! Two-phase adaptive accelerated driver: a simple phase that secures one
//! successful regularized step, then an accelerated phase steered by the
//! auxiliary model, with parameter-free sigma and tau adaptation throughout.

mod agd;
mod arc;

pub use agd::{agd_baseline, AgdBaselineParams};
pub use arc::{arc_baseline, ArcParams};

use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;

use crate::auxiliary::AuxModel;
use crate::error::{Error, Result};
use crate::model::{
    build_model, pointwise_convexity_check, residual_criterion, step_coupled_hessian,
    EffectiveModel, ModelVariant, RegularizedModel,
};
use crate::problem::{gradient_mapping_norm, CompositeProblem};
use crate::subsolver::{
    solve_composite_apgd, solve_cubic_direct, solve_cubic_lanczos, solve_first_order, ApgdParams,
    LanczosParams, SubsolveResult, SubsolveStatus,
};

/// Proximal step length behind the gradient-mapping stopping measure.
const MAP_ALPHA: f64 = 1.0;

/// Steps shorter than this (relative to the anchor) are treated as degenerate.
fn eps_step(y: &DVector<f64>) -> f64 {
    1e-12 * (1.0 + y.norm())
}

/// Which part of a run produced a trace record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Sas,
    Aas,
    ArcHybrid,
    Arc,
    Agd,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Sas => "SAS",
            Phase::Aas => "AAS",
            Phase::ArcHybrid => "ARC-hybrid",
            Phase::Arc => "ARC",
            Phase::Agd => "AGD",
        }
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "SAS" => Ok(Phase::Sas),
            "AAS" => Ok(Phase::Aas),
            "ARC-hybrid" => Ok(Phase::ArcHybrid),
            "ARC" => Ok(Phase::Arc),
            "AGD" => Ok(Phase::Agd),
            other => Err(Error::InvalidArgument(format!("unknown phase '{other}'"))),
        }
    }
}

/// One outer iteration of any solver run.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub i: usize,
    pub phase: Phase,
    pub success: bool,
    pub f: f64,
    pub grad_map: f64,
    pub sigma: f64,
    pub tau: Option<f64>,
    pub step_norm: f64,
    pub inner_iters: usize,
    pub theta: Option<f64>,
    pub wall_ns: u128,
}

/// Per-iteration records of a run.
#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    /// Successful accelerated-phase records, in order.
    pub fn aas_successes(&self) -> Vec<&TraceRecord> {
        self.records
            .iter()
            .filter(|r| r.phase == Phase::Aas && r.success)
            .collect()
    }

    pub fn max_sigma(&self) -> f64 {
        self.records
            .iter()
            .fold(f64::NEG_INFINITY, |m, r| m.max(r.sigma))
    }
}

/// Termination state of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    IterCap,
    SubsolveFail,
    EscalationFail,
}

/// Optional extras recorded during a run for verification work.
#[derive(Debug, Clone, Default)]
pub struct RunDiagnostics {
    /// Successful iterates (the accelerated phase also records its start).
    pub successful_iterates: Vec<DVector<f64>>,
    /// Anchors of every model built, with the finite-difference step when the
    /// inexact-Hessian variant produced one.
    pub model_anchors: Vec<(DVector<f64>, Option<f64>)>,
    /// Number of pointwise convexity checks evaluated (order >= 3 only).
    pub convexity_checks: usize,
    /// Total tau multiplications across all escalation rounds.
    pub tau_escalations: usize,
    /// Anomalies worth surfacing without failing the run, e.g. a coupled
    /// finite-difference step that exceeds the trial step it induced.
    pub warnings: Vec<String>,
}

/// Final iterate, objective value and the full trace of a run.
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: DVector<f64>,
    pub f: f64,
    pub status: RunStatus,
    pub trace: RunTrace,
    pub diagnostics: RunDiagnostics,
}

/// Stopping rules shared by the drivers.
#[derive(Debug, Clone)]
pub struct StoppingRule {
    pub grad_map_tol: f64,
    /// Cap on successful accelerated iterations.
    pub max_success: usize,
    /// Cap on total outer iterations across phases.
    pub max_total: usize,
    /// Stop once `F - fstar_hint <= target_gap` (needs `fstar_hint`).
    pub target_gap: Option<f64>,
    pub fstar_hint: Option<f64>,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self {
            grad_map_tol: 1e-9,
            max_success: 500,
            max_total: 5000,
            target_gap: None,
            fstar_hint: None,
        }
    }
}

/// Switch rule for the hybrid variant: once enough accelerated successes have
/// accumulated and per-iteration progress turns relative-small, hand the
/// iterate to the plain adaptive cubic-regularization loop.
#[derive(Debug, Clone)]
pub struct HybridRule {
    pub enabled: bool,
    pub min_success: usize,
    pub rel_progress: f64,
    pub arc_grad_tol: f64,
}

impl Default for HybridRule {
    fn default() -> Self {
        Self {
            enabled: false,
            min_success: 10,
            rel_progress: 0.1,
            arc_grad_tol: 1e-9,
        }
    }
}

/// Finite-difference coupling parameters for the inexact-Hessian variant.
#[derive(Debug, Clone)]
pub struct FdCoupling {
    pub kappa_c: f64,
    pub kappa_hs: f64,
    pub max_h_iters: usize,
}

impl Default for FdCoupling {
    fn default() -> Self {
        Self {
            kappa_c: 1.0,
            kappa_hs: 1.0,
            max_h_iters: 30,
        }
    }
}

/// Inner-solver budgets.
#[derive(Debug, Clone)]
pub struct SubsolveBudget {
    /// Krylov dimension cap (clamped to the problem dimension).
    pub lanczos_max_dim: usize,
    pub apgd_alpha0: f64,
    pub apgd_max_iters: usize,
    /// Safety cap on tau multiplications per escalation round.
    pub escalation_cap: usize,
}

impl Default for SubsolveBudget {
    fn default() -> Self {
        Self {
            lanczos_max_dim: usize::MAX,
            apgd_alpha0: 1.0,
            apgd_max_iters: 20_000,
            escalation_cap: 200,
        }
    }
}

/// Full driver configuration. The defaults satisfy every input constraint
/// (`gamma2 > gamma1 > 1`, `gamma3 > 1`, `0 < sigma_min <= sigma0`, ...).
#[derive(Debug, Clone)]
pub struct UaaConfig {
    pub p: usize,
    pub variant: ModelVariant,
    pub sigma0: f64,
    pub sigma_min: f64,
    pub tau0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub eta: f64,
    pub kappa_theta: f64,
    pub stopping: StoppingRule,
    pub hybrid: HybridRule,
    pub fd: FdCoupling,
    pub budget: SubsolveBudget,
    /// Reproduce the greedy tau schedule that multiplies before testing.
    pub strict_listing_tau: bool,
    /// Keep iterates and model anchors on the solution for bound replays.
    pub record_diagnostics: bool,
    /// Carried for provenance; the driver itself is deterministic.
    pub seed: u64,
}

impl UaaConfig {
    pub fn for_order(p: usize, variant: ModelVariant) -> Self {
        Self {
            p,
            variant,
            sigma0: 1.0,
            sigma_min: 1e-8,
            tau0: 1.0,
            gamma1: 2.0,
            gamma2: 3.0,
            gamma3: 2.0,
            eta: 1e-4,
            kappa_theta: 0.5,
            stopping: StoppingRule::default(),
            hybrid: HybridRule::default(),
            fd: FdCoupling::default(),
            budget: SubsolveBudget::default(),
            strict_listing_tau: false,
            record_diagnostics: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::Configuration("p must be at least 1".into()));
        }
        if !(self.gamma2 > self.gamma1 && self.gamma1 > 1.0) {
            return Err(Error::Configuration(format!(
                "need gamma2 > gamma1 > 1, got gamma1 = {}, gamma2 = {}",
                self.gamma1, self.gamma2
            )));
        }
        if self.gamma3 <= 1.0 {
            return Err(Error::Configuration(format!(
                "gamma3 {} must exceed 1",
                self.gamma3
            )));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min <= self.sigma0) {
            return Err(Error::Configuration(format!(
                "need 0 < sigma_min <= sigma0, got sigma_min = {}, sigma0 = {}",
                self.sigma_min, self.sigma0
            )));
        }
        if self.tau0 <= 0.0 {
            return Err(Error::Configuration(format!(
                "tau0 {} must be positive",
                self.tau0
            )));
        }
        if self.eta <= 0.0 {
            return Err(Error::Configuration(format!(
                "eta {} must be positive",
                self.eta
            )));
        }
        if self.kappa_theta < 0.0 {
            return Err(Error::Configuration(format!(
                "kappa_theta {} must be nonnegative",
                self.kappa_theta
            )));
        }
        let variant_order = match self.variant {
            ModelVariant::FirstOrder => Some(1),
            ModelVariant::ExactHessian | ModelVariant::InexactHessian => Some(2),
            ModelVariant::TaylorP => None,
        };
        if let Some(required) = variant_order {
            if self.p != required {
                return Err(Error::Configuration(format!(
                    "variant {:?} requires p = {required}, got {}",
                    self.variant, self.p
                )));
            }
        }
        Ok(())
    }
}

/// Acceptance ratio for a trial point: the directional alignment of the
/// composite gradient at `x` with the step back toward the anchor `y`,
/// normalized by `||y - x||^{p+1}`. `None` signals a degenerate step.
pub fn theta(
    x: &DVector<f64>,
    y: &DVector<f64>,
    xi: &DVector<f64>,
    grad_f_at_x: &DVector<f64>,
    p: usize,
) -> Option<f64> {
    let back = y - x;
    let dist = back.norm();
    if dist <= eps_step(y) {
        return None;
    }
    Some(back.dot(&(grad_f_at_x + xi)) / dist.powi(p as i32 + 1))
}

/// How the simple adaptive phase ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SasStatus {
    /// One successful step was taken; the accelerated phase may start.
    StepTaken,
    /// The start already satisfies the stationarity tolerance.
    Converged,
    /// Budget exhausted without a successful step.
    Failed,
}

/// Output of the simple adaptive phase.
#[derive(Debug, Clone)]
pub struct SasResult {
    pub x: DVector<f64>,
    pub sigma: f64,
    pub trace: RunTrace,
    pub status: SasStatus,
    pub diagnostics: RunDiagnostics,
}

enum SasExit {
    Success { x: DVector<f64>, sigma: f64 },
    Stop { x: DVector<f64>, status: RunStatus },
}

enum AasExit {
    Finished { x: DVector<f64>, status: RunStatus },
    Switch { x: DVector<f64>, sigma: f64 },
}

struct Run<'a> {
    problem: &'a CompositeProblem,
    config: &'a UaaConfig,
    trace: Vec<TraceRecord>,
    diag: RunDiagnostics,
    i: usize,
    prev_step_norm: Option<f64>,
    last_grad_map: f64,
    last_f: f64,
}

/// Krylov solve of the smooth order-2 subproblem with a direct fallback on
/// the materialized model Hessian when the Krylov path gives up.
pub(crate) fn solve_smooth_cubic(
    problem: &CompositeProblem,
    model: &EffectiveModel,
    sigma: f64,
    kappa_theta: f64,
    lanczos_max_dim: usize,
) -> Result<SubsolveResult> {
    let max_dim = lanczos_max_dim.min(problem.dim()).max(1);
    let params = LanczosParams::new(kappa_theta, max_dim, model.f_anchor());
    let hvp = |v: &DVector<f64>| model.curvature_vec(v);
    let res = solve_cubic_lanczos(model.anchor(), model.grad_anchor(), &hvp, sigma, &params)?;
    if res.is_satisfied() {
        return Ok(res);
    }
    match model.hessian_at(model.anchor()) {
        Ok(h) => {
            let direct = solve_cubic_direct(model.anchor(), model.grad_anchor(), &h, sigma)?;
            let reg = RegularizedModel::new(model, sigma, problem);
            let check = residual_criterion(&reg, &direct.x_bar, &direct.xi, kappa_theta);
            Ok(SubsolveResult {
                residual: check.residual,
                bound: check.bound,
                status: if check.satisfied {
                    SubsolveStatus::Satisfied
                } else {
                    SubsolveStatus::Failed
                },
                ..direct
            })
        }
        Err(_) => Ok(res),
    }
}

/// Dispatches the subproblem solve appropriate for the model order and the
/// presence of a nonsmooth term.
fn solve_model(
    problem: &CompositeProblem,
    config: &UaaConfig,
    model: &EffectiveModel,
    sigma: f64,
    warm: Option<&DVector<f64>>,
) -> Result<SubsolveResult> {
    match model.order() {
        1 => solve_first_order(model.anchor(), model.grad_anchor(), sigma, problem),
        2 if !problem.has_nonsmooth() => solve_smooth_cubic(
            problem,
            model,
            sigma,
            config.kappa_theta,
            config.budget.lanczos_max_dim,
        ),
        _ => {
            let reg = RegularizedModel::new(model, sigma, problem);
            let params = ApgdParams::new(
                config.kappa_theta,
                config.budget.apgd_alpha0,
                config.budget.apgd_max_iters,
            );
            solve_composite_apgd(&reg, &params, warm)
        }
    }
}

impl<'a> Run<'a> {
    fn new(problem: &'a CompositeProblem, config: &'a UaaConfig) -> Self {
        Self {
            problem,
            config,
            trace: Vec::new(),
            diag: RunDiagnostics::default(),
            i: 0,
            prev_step_norm: None,
            last_grad_map: f64::NAN,
            last_f: f64::NAN,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        phase: Phase,
        success: bool,
        f: f64,
        grad_map: f64,
        sigma: f64,
        tau: Option<f64>,
        step_norm: f64,
        inner_iters: usize,
        theta_value: Option<f64>,
        started: Instant,
    ) {
        self.trace.push(TraceRecord {
            i: self.i,
            phase,
            success,
            f,
            grad_map,
            sigma,
            tau,
            step_norm,
            inner_iters,
            theta: theta_value,
            wall_ns: started.elapsed().as_nanos(),
        });
    }

    /// Builds the model at `anchor` and solves the regularized subproblem.
    /// The inexact-Hessian variant couples the finite-difference step to the
    /// trial step it induces, re-solving as `h` contracts.
    fn build_and_solve(
        &mut self,
        anchor: &DVector<f64>,
        sigma: f64,
        warm: Option<&DVector<f64>>,
    ) -> Result<(EffectiveModel, SubsolveResult)> {
        let config = self.config;
        let problem = self.problem;
        let oracle = problem.oracle_arc();
        let (model, res) = if config.variant == ModelVariant::InexactHessian {
            let f_anchor = oracle.value(anchor);
            let grad_anchor = oracle.gradient(anchor);
            let h0 = self.prev_step_norm.filter(|s| *s > 0.0).unwrap_or(1.0);
            let mut captured: Option<Result<SubsolveResult>> = None;
            let coupled = step_coupled_hessian(
                oracle.as_ref(),
                anchor,
                h0,
                config.fd.kappa_hs,
                config.fd.kappa_c,
                config.fd.max_h_iters,
                |hmat| {
                    let m = EffectiveModel::with_hessian_matrix(
                        anchor,
                        f_anchor,
                        grad_anchor.clone(),
                        hmat.clone(),
                        None,
                    );
                    match solve_model(problem, config, &m, sigma, warm) {
                        Ok(r) => {
                            let step = &r.x_bar - anchor;
                            captured = Some(Ok(r));
                            step
                        }
                        Err(e) => {
                            captured = Some(Err(e));
                            DVector::zeros(anchor.len())
                        }
                    }
                },
            )?;
            let res = captured.expect("coupling ran the solver at least once")?;
            // the surrogate deviation bound presumes trial steps at least as
            // long as the difference step; with kappa_hs > 1 that can fail
            if coupled.step.norm() < coupled.h {
                self.diag.warnings.push(format!(
                    "iteration {}: coupled step {:.3e} shorter than fd step {:.3e}",
                    self.i,
                    coupled.step.norm(),
                    coupled.h
                ));
            }
            let model = EffectiveModel::with_hessian_matrix(
                anchor,
                f_anchor,
                grad_anchor,
                coupled.hessian,
                Some(coupled.h),
            );
            (model, res)
        } else {
            let fd = None;
            let model = build_model(&oracle, anchor, config.variant, config.p, fd)?;
            let res = solve_model(problem, config, &model, sigma, warm)?;
            (model, res)
        };
        if config.record_diagnostics {
            self.diag
                .model_anchors
                .push((anchor.clone(), model.fd_step()));
        }
        Ok((model, res))
    }

    fn grad_map_at(&mut self, x: &DVector<f64>) -> f64 {
        let gm = gradient_mapping_norm(self.problem, x, MAP_ALPHA);
        self.last_grad_map = gm;
        gm
    }

    /// Phase I: adapt sigma until a single iteration wins the descent test
    /// (plus the pointwise convexity test for orders >= 3).
    fn sas_phase(&mut self, x0: &DVector<f64>) -> Result<SasExit> {
        let config = self.config;
        let x = x0.clone();
        let mut sigma = config.sigma0;
        self.last_f = self.problem.objective(&x);
        self.grad_map_at(&x);

        loop {
            if self.i >= config.stopping.max_total {
                return Ok(SasExit::Stop {
                    x,
                    status: RunStatus::SubsolveFail,
                });
            }
            let started = Instant::now();
            let (model, res) = match self.build_and_solve(&x, sigma, None) {
                Ok(v) => v,
                Err(Error::CouplingFailure { .. }) => {
                    let gm = self.grad_map_at(&x);
                    let status = if gm <= config.stopping.grad_map_tol {
                        RunStatus::Converged
                    } else {
                        RunStatus::SubsolveFail
                    };
                    return Ok(SasExit::Stop { x, status });
                }
                Err(e) => return Err(e),
            };
            let step_norm = (&res.x_bar - &x).norm();

            if step_norm <= eps_step(&x) {
                let gm = self.grad_map_at(&x);
                let converged = gm <= config.stopping.grad_map_tol;
                self.record(
                    Phase::Sas,
                    false,
                    self.last_f,
                    gm,
                    sigma,
                    None,
                    step_norm,
                    res.inner_iters,
                    None,
                    started,
                );
                self.i += 1;
                if converged {
                    return Ok(SasExit::Stop {
                        x,
                        status: RunStatus::Converged,
                    });
                }
                sigma *= config.gamma1;
                continue;
            }
            if !res.is_satisfied() {
                self.record(
                    Phase::Sas,
                    false,
                    self.last_f,
                    self.last_grad_map,
                    sigma,
                    None,
                    step_norm,
                    res.inner_iters,
                    None,
                    started,
                );
                return Ok(SasExit::Stop {
                    x,
                    status: RunStatus::SubsolveFail,
                });
            }

            let f_trial = self.problem.objective(&res.x_bar);
            let reg = RegularizedModel::new(&model, sigma, self.problem);
            let m_trial = reg.value(&res.x_bar);
            let mut success = f_trial - m_trial < 0.0;
            if success && config.p >= 3 {
                self.diag.convexity_checks += 1;
                success = pointwise_convexity_check(&reg, &res.x_bar)?;
            }

            if success {
                let gm = self.grad_map_at(&res.x_bar);
                self.record(
                    Phase::Sas,
                    true,
                    f_trial,
                    gm,
                    sigma,
                    None,
                    step_norm,
                    res.inner_iters,
                    None,
                    started,
                );
                self.i += 1;
                self.prev_step_norm = Some(step_norm);
                self.last_f = f_trial;
                let sigma_out = (sigma / config.gamma1).max(config.sigma_min);
                return Ok(SasExit::Success {
                    x: res.x_bar,
                    sigma: sigma_out,
                });
            }
            self.record(
                Phase::Sas,
                false,
                self.last_f,
                self.last_grad_map,
                sigma,
                None,
                step_norm,
                res.inner_iters,
                None,
                started,
            );
            self.i += 1;
            sigma *= config.gamma1;
        }
    }

    /// Phase II: accelerated loop driven by the theta acceptance test and the
    /// auxiliary model, with the optional hybrid switch.
    fn aas_phase(
        &mut self,
        x0: &DVector<f64>,
        sigma_in: f64,
        hybrid: Option<&HybridRule>,
    ) -> Result<AasExit> {
        let config = self.config;
        let p = config.p;
        let f0 = self.problem.objective(x0);
        self.last_f = f0;
        if self.grad_map_at(x0) <= config.stopping.grad_map_tol {
            return Ok(AasExit::Finished {
                x: x0.clone(),
                status: RunStatus::Converged,
            });
        }

        let mut aux = AuxModel::init(x0.clone(), f0, config.tau0, p)?;
        let mut x_bar = x0.clone();
        let mut z = x0.clone();
        let mut y = combine(&x_bar, &z, aux.successes(), p);
        let mut sigma = sigma_in.max(config.sigma_min);
        let mut prev_success_f = f0;
        let mut warm: Option<DVector<f64>> = None;
        if config.record_diagnostics {
            self.diag.successful_iterates.push(x_bar.clone());
        }

        loop {
            if self.i >= config.stopping.max_total {
                return Ok(AasExit::Finished {
                    x: x_bar,
                    status: RunStatus::IterCap,
                });
            }
            let started = Instant::now();
            let (_, res) = match self.build_and_solve(&y, sigma, warm.as_ref()) {
                Ok(v) => v,
                Err(Error::CouplingFailure { .. }) => {
                    let gm = self.grad_map_at(&y);
                    if gm <= config.stopping.grad_map_tol {
                        let x = better_of(self.problem, y, x_bar);
                        return Ok(AasExit::Finished {
                            x,
                            status: RunStatus::Converged,
                        });
                    }
                    return Ok(AasExit::Finished {
                        x: x_bar,
                        status: RunStatus::SubsolveFail,
                    });
                }
                Err(e) => return Err(e),
            };
            let trial = res.x_bar.clone();
            let step_norm = (&trial - &y).norm();

            if step_norm <= eps_step(&y) {
                let gm = self.grad_map_at(&y);
                let converged = gm <= config.stopping.grad_map_tol;
                self.record(
                    Phase::Aas,
                    false,
                    self.last_f,
                    gm,
                    sigma,
                    Some(aux.tau()),
                    step_norm,
                    res.inner_iters,
                    None,
                    started,
                );
                self.i += 1;
                if converged {
                    let x = better_of(self.problem, y, x_bar);
                    return Ok(AasExit::Finished {
                        x,
                        status: RunStatus::Converged,
                    });
                }
                sigma *= config.gamma1;
                continue;
            }
            if !res.is_satisfied() {
                self.record(
                    Phase::Aas,
                    false,
                    self.last_f,
                    self.last_grad_map,
                    sigma,
                    Some(aux.tau()),
                    step_norm,
                    res.inner_iters,
                    None,
                    started,
                );
                return Ok(AasExit::Finished {
                    x: x_bar,
                    status: RunStatus::SubsolveFail,
                });
            }

            let grad_trial = self.problem.oracle().gradient(&trial);
            let th =
                theta(&trial, &y, &res.xi, &grad_trial, p).expect("step verified non-degenerate");

            if th >= config.eta {
                let f_next = self.problem.objective(&trial);
                let v = &grad_trial + &res.xi;
                aux.accumulate(&trial, f_next, &v);
                let esc = match aux.escalate_tau(
                    f_next,
                    config.gamma3,
                    config.strict_listing_tau,
                    config.budget.escalation_cap,
                ) {
                    Ok(esc) => esc,
                    Err(Error::EscalationFailure { .. }) => {
                        self.record(
                            Phase::Aas,
                            true,
                            f_next,
                            self.last_grad_map,
                            sigma,
                            Some(aux.tau()),
                            step_norm,
                            res.inner_iters,
                            Some(th),
                            started,
                        );
                        return Ok(AasExit::Finished {
                            x: trial,
                            status: RunStatus::EscalationFail,
                        });
                    }
                    Err(e) => return Err(e),
                };
                self.diag.tau_escalations += esc.escalations;
                z = esc.z;
                aux.advance();
                y = combine(&trial, &z, aux.successes(), p);
                x_bar = trial;
                self.last_f = f_next;
                self.prev_step_norm = Some(step_norm);
                warm = Some(x_bar.clone());
                if config.record_diagnostics {
                    self.diag.successful_iterates.push(x_bar.clone());
                }

                let gm = self.grad_map_at(&x_bar);
                self.record(
                    Phase::Aas,
                    true,
                    f_next,
                    gm,
                    sigma,
                    Some(aux.tau()),
                    step_norm,
                    res.inner_iters,
                    Some(th),
                    started,
                );
                self.i += 1;
                sigma = (sigma / config.gamma1).max(config.sigma_min);

                if gm <= config.stopping.grad_map_tol {
                    return Ok(AasExit::Finished {
                        x: x_bar,
                        status: RunStatus::Converged,
                    });
                }
                if let (Some(gap), Some(fstar)) =
                    (config.stopping.target_gap, config.stopping.fstar_hint)
                {
                    if f_next - fstar <= gap {
                        return Ok(AasExit::Finished {
                            x: x_bar,
                            status: RunStatus::Converged,
                        });
                    }
                }
                if aux.successes() >= config.stopping.max_success {
                    return Ok(AasExit::Finished {
                        x: x_bar,
                        status: RunStatus::IterCap,
                    });
                }
                if let Some(rule) = hybrid {
                    if aux.successes() >= rule.min_success {
                        let rel = (f_next - prev_success_f).abs() / prev_success_f.abs().max(1e-12);
                        if rel <= rule.rel_progress {
                            return Ok(AasExit::Switch { x: x_bar, sigma });
                        }
                    }
                }
                prev_success_f = f_next;
            } else {
                self.record(
                    Phase::Aas,
                    false,
                    self.last_f,
                    self.last_grad_map,
                    sigma,
                    Some(aux.tau()),
                    step_norm,
                    res.inner_iters,
                    Some(th),
                    started,
                );
                self.i += 1;
                sigma *= config.gamma1;
                warm = Some(trial);
            }
        }
    }

    fn into_solution(self, x: DVector<f64>, status: RunStatus) -> Solution {
        let f = self.problem.objective(&x);
        Solution {
            x,
            f,
            status,
            trace: RunTrace {
                records: self.trace,
            },
            diagnostics: self.diag,
        }
    }
}

/// The acceleration point: `(j+1)/(j+p+2) xbar + (p+1)/(j+p+2) z` at success
/// count `j`. Collapses to `xbar` at `j = 0` where `z = xbar`.
fn combine(x_bar: &DVector<f64>, z: &DVector<f64>, j: usize, p: usize) -> DVector<f64> {
    let denom = (j + p + 2) as f64;
    x_bar * ((j + 1) as f64 / denom) + z * ((p + 1) as f64 / denom)
}

fn better_of(problem: &CompositeProblem, a: DVector<f64>, b: DVector<f64>) -> DVector<f64> {
    if problem.objective(&a) <= problem.objective(&b) {
        a
    } else {
        b
    }
}

/// Phase I alone: one successful adaptive step from `x0`.
pub fn sas(problem: &CompositeProblem, x0: &DVector<f64>, config: &UaaConfig) -> Result<SasResult> {
    config.validate()?;
    let mut run = Run::new(problem, config);
    let exit = run.sas_phase(x0)?;
    let (x, sigma, status) = match exit {
        SasExit::Success { x, sigma } => (x, sigma, SasStatus::StepTaken),
        SasExit::Stop {
            x,
            status: RunStatus::Converged,
        } => (x, config.sigma0, SasStatus::Converged),
        SasExit::Stop { x, .. } => (x, config.sigma0, SasStatus::Failed),
    };
    Ok(SasResult {
        x,
        sigma,
        trace: RunTrace { records: run.trace },
        status,
        diagnostics: run.diag,
    })
}

/// Phase II alone, starting from `x0` with regularization `sigma_in`.
pub fn aas(
    problem: &CompositeProblem,
    x0: &DVector<f64>,
    sigma_in: f64,
    config: &UaaConfig,
) -> Result<Solution> {
    config.validate()?;
    let mut run = Run::new(problem, config);
    match run.aas_phase(x0, sigma_in, None)? {
        AasExit::Finished { x, status } => Ok(run.into_solution(x, status)),
        AasExit::Switch { .. } => unreachable!("hybrid rule not supplied"),
    }
}

/// The full two-phase method: one successful simple step, then the
/// accelerated loop, threading the iterate and sigma between them.
pub fn uaa(problem: &CompositeProblem, x0: &DVector<f64>, config: &UaaConfig) -> Result<Solution> {
    config.validate()?;
    let mut run = Run::new(problem, config);
    match run.sas_phase(x0)? {
        SasExit::Stop { x, status } => Ok(run.into_solution(x, status)),
        SasExit::Success { x, sigma } => match run.aas_phase(&x, sigma, None)? {
            AasExit::Finished { x, status } => Ok(run.into_solution(x, status)),
            AasExit::Switch { .. } => unreachable!("hybrid rule not supplied"),
        },
    }
}

/// Hybrid variant for smooth order-2 runs: the accelerated loop covers the
/// far-from-optimum regime, then plain adaptive cubic regularization finishes
/// once relative progress per success drops below the rule's threshold.
pub fn aarc_hybrid(
    problem: &CompositeProblem,
    x0: &DVector<f64>,
    config: &UaaConfig,
) -> Result<Solution> {
    config.validate()?;
    if config.p != 2 {
        return Err(Error::Configuration("hybrid runs require p = 2".into()));
    }
    if problem.has_nonsmooth() {
        return Err(Error::Configuration(
            "hybrid runs require a smooth problem".into(),
        ));
    }
    let mut run = Run::new(problem, config);
    let hybrid = config.hybrid.clone();
    match run.sas_phase(x0)? {
        SasExit::Stop { x, status } => Ok(run.into_solution(x, status)),
        SasExit::Success { x, sigma } => match run.aas_phase(&x, sigma, Some(&hybrid))? {
            AasExit::Finished { x, status } => Ok(run.into_solution(x, status)),
            AasExit::Switch { x, sigma } => {
                let params = ArcParams {
                    sigma0: sigma,
                    sigma_min: config.sigma_min,
                    gamma1: config.gamma1,
                    eta1: 0.1,
                    eta2: 0.9,
                    grad_tol: hybrid.arc_grad_tol,
                    max_iters: config.stopping.max_total.saturating_sub(run.i),
                    kappa_theta: config.kappa_theta,
                    lanczos_max_dim: config.budget.lanczos_max_dim,
                };
                let (x_end, status, records) =
                    arc::arc_run(problem, &x, &params, Phase::ArcHybrid, run.i)?;
                run.trace.extend(records);
                run.i = run.trace.last().map_or(run.i, |r| r.i + 1);
                Ok(run.into_solution(x_end, status))
            }
        },
    }
}
