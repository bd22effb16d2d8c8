//! Anchored approximations of the smooth part and the regularized
//! per-iteration subproblem built on top of them.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::problem::{CompositeProblem, SmoothOracle};

/// Which approximation of the smooth part anchors the subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelVariant {
    /// Linearization; pairs with a quadratic regularizer (p = 1).
    FirstOrder,
    /// Second-order Taylor with the oracle's Hessian (p = 2).
    ExactHessian,
    /// Second-order model with a finite-difference Hessian surrogate (p = 2).
    InexactHessian,
    /// Taylor expansion of order p (implemented for p <= 3).
    TaylorP,
}

/// Finite-difference parameters for the inexact-Hessian variant.
#[derive(Debug, Clone, Copy)]
pub struct FdParams {
    /// Forward-difference step size.
    pub h: f64,
    /// Diagonal shift coefficient; the surrogate is `sym(A) + kappa_c * h * I`.
    pub kappa_c: f64,
}

enum Curvature {
    /// No second-order term.
    None,
    /// Exact Hessian at the anchor, applied through the oracle.
    Oracle(Arc<dyn SmoothOracle>),
    /// Materialized surrogate Hessian.
    Matrix(DMatrix<f64>),
    /// Exact Hessian plus third-order contractions through the oracle.
    Tensor(Arc<dyn SmoothOracle>),
}

/// An approximation of the smooth part anchored at `x`: agrees with `f` in
/// value and gradient at the anchor, and is evaluated at trial points by the
/// subproblem solvers.
pub struct EffectiveModel {
    anchor: DVector<f64>,
    order: usize,
    variant: ModelVariant,
    f_anchor: f64,
    grad_anchor: DVector<f64>,
    curvature: Curvature,
    /// Step size behind a finite-difference Hessian, when one was used.
    fd_step: Option<f64>,
}

/// Builds the effective approximation of the given variant anchored at `x`.
///
/// `fd` is required for (and only consulted by) the inexact-Hessian variant.
pub fn build_model(
    oracle: &Arc<dyn SmoothOracle>,
    x: &DVector<f64>,
    variant: ModelVariant,
    p: usize,
    fd: Option<FdParams>,
) -> Result<EffectiveModel> {
    match variant {
        ModelVariant::FirstOrder => {
            if p != 1 {
                return Err(Error::Configuration(format!(
                    "first-order model requires p = 1, got {p}"
                )));
            }
            Ok(EffectiveModel::first_order(oracle.as_ref(), x))
        }
        ModelVariant::ExactHessian => {
            if p != 2 {
                return Err(Error::Configuration(format!(
                    "exact-Hessian model requires p = 2, got {p}"
                )));
            }
            EffectiveModel::exact_hessian(oracle, x)
        }
        ModelVariant::InexactHessian => {
            if p != 2 {
                return Err(Error::Configuration(format!(
                    "inexact-Hessian model requires p = 2, got {p}"
                )));
            }
            let fd = fd.ok_or_else(|| {
                Error::Configuration(
                    "inexact-Hessian model requires finite-difference parameters".into(),
                )
            })?;
            EffectiveModel::inexact_hessian_model(oracle.as_ref(), x, fd)
        }
        ModelVariant::TaylorP => EffectiveModel::taylor(oracle, x, p),
    }
}

impl EffectiveModel {
    pub fn first_order(oracle: &dyn SmoothOracle, x: &DVector<f64>) -> Self {
        Self {
            anchor: x.clone(),
            order: 1,
            variant: ModelVariant::FirstOrder,
            f_anchor: oracle.value(x),
            grad_anchor: oracle.gradient(x),
            curvature: Curvature::None,
            fd_step: None,
        }
    }

    pub fn exact_hessian(oracle: &Arc<dyn SmoothOracle>, x: &DVector<f64>) -> Result<Self> {
        if oracle.order() < 2 {
            return Err(Error::Configuration(
                "oracle does not expose second derivatives".into(),
            ));
        }
        Ok(Self {
            anchor: x.clone(),
            order: 2,
            variant: ModelVariant::ExactHessian,
            f_anchor: oracle.value(x),
            grad_anchor: oracle.gradient(x),
            curvature: Curvature::Oracle(Arc::clone(oracle)),
            fd_step: None,
        })
    }

    pub fn inexact_hessian_model(
        oracle: &dyn SmoothOracle,
        x: &DVector<f64>,
        fd: FdParams,
    ) -> Result<Self> {
        let h = inexact_hessian(oracle, x, fd.h, fd.kappa_c)?;
        Ok(Self::with_hessian_matrix(
            x,
            oracle.value(x),
            oracle.gradient(x),
            h,
            Some(fd.h),
        ))
    }

    /// Second-order model around a caller-supplied symmetric surrogate `H`.
    pub fn with_hessian_matrix(
        x: &DVector<f64>,
        f_anchor: f64,
        grad_anchor: DVector<f64>,
        hessian: DMatrix<f64>,
        fd_step: Option<f64>,
    ) -> Self {
        Self {
            anchor: x.clone(),
            order: 2,
            variant: ModelVariant::InexactHessian,
            f_anchor,
            grad_anchor,
            curvature: Curvature::Matrix(hessian),
            fd_step,
        }
    }

    pub fn taylor(oracle: &Arc<dyn SmoothOracle>, x: &DVector<f64>, p: usize) -> Result<Self> {
        match p {
            0 => Err(Error::Configuration("Taylor model requires p >= 1".into())),
            1 => Ok(Self::first_order(oracle.as_ref(), x)),
            2 => {
                let mut m = Self::exact_hessian(oracle, x)?;
                m.variant = ModelVariant::TaylorP;
                Ok(m)
            }
            3 => {
                if oracle.order() < 3
                    || oracle.third_contract(x, &DVector::zeros(x.len())).is_none()
                {
                    return Err(Error::Configuration(
                        "oracle does not expose third derivatives".into(),
                    ));
                }
                Ok(Self {
                    anchor: x.clone(),
                    order: 3,
                    variant: ModelVariant::TaylorP,
                    f_anchor: oracle.value(x),
                    grad_anchor: oracle.gradient(x),
                    curvature: Curvature::Tensor(Arc::clone(oracle)),
                    fd_step: None,
                })
            }
            _ => Err(Error::Configuration(format!(
                "Taylor models of order {p} have no oracle support (max 3)"
            ))),
        }
    }

    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn f_anchor(&self) -> f64 {
        self.f_anchor
    }

    pub fn grad_anchor(&self) -> &DVector<f64> {
        &self.grad_anchor
    }

    pub fn fd_step(&self) -> Option<f64> {
        self.fd_step
    }

    /// Action of the model's quadratic term on `v` (the Hessian surrogate at
    /// the anchor; zero for the first-order model).
    pub fn curvature_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.curvature {
            Curvature::None => DVector::zeros(v.len()),
            Curvature::Oracle(oracle) | Curvature::Tensor(oracle) => {
                oracle.hessian_vec(&self.anchor, v)
            }
            Curvature::Matrix(h) => h * v,
        }
    }

    /// Model value at `y`.
    pub fn value(&self, y: &DVector<f64>) -> f64 {
        let s = y - &self.anchor;
        let mut val = self.f_anchor + self.grad_anchor.dot(&s);
        match &self.curvature {
            Curvature::None => {}
            Curvature::Oracle(_) | Curvature::Matrix(_) => {
                val += 0.5 * s.dot(&self.curvature_vec(&s));
            }
            Curvature::Tensor(oracle) => {
                val += 0.5 * s.dot(&self.curvature_vec(&s));
                let tc = oracle
                    .third_contract(&self.anchor, &s)
                    .expect("checked at build");
                val += s.dot(&tc) / 6.0;
            }
        }
        val
    }

    /// Model gradient at `y`.
    pub fn grad(&self, y: &DVector<f64>) -> DVector<f64> {
        let s = y - &self.anchor;
        match &self.curvature {
            Curvature::None => self.grad_anchor.clone(),
            Curvature::Oracle(_) | Curvature::Matrix(_) => {
                &self.grad_anchor + self.curvature_vec(&s)
            }
            Curvature::Tensor(oracle) => {
                let tc = oracle
                    .third_contract(&self.anchor, &s)
                    .expect("checked at build");
                &self.grad_anchor + self.curvature_vec(&s) + tc * 0.5
            }
        }
    }

    /// Materialized model Hessian at `y`. Constant in `y` for orders <= 2;
    /// for the third-order model the tensor slice is recovered exactly from
    /// contractions via polarization.
    pub fn hessian_at(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        let d = self.anchor.len();
        match &self.curvature {
            Curvature::None => Ok(DMatrix::zeros(d, d)),
            Curvature::Matrix(h) => Ok(h.clone()),
            Curvature::Oracle(oracle) => oracle.full_hessian(&self.anchor).ok_or_else(|| {
                Error::Configuration("oracle cannot materialize its Hessian".into())
            }),
            Curvature::Tensor(oracle) => {
                let mut h = oracle.full_hessian(&self.anchor).ok_or_else(|| {
                    Error::Configuration("oracle cannot materialize its Hessian".into())
                })?;
                let s = y - &self.anchor;
                // T[s, e_j] = (T[s+e_j, s+e_j] - T[s-e_j, s-e_j]) / 4
                for j in 0..d {
                    let mut plus = s.clone();
                    plus[j] += 1.0;
                    let mut minus = s.clone();
                    minus[j] -= 1.0;
                    let tp = oracle
                        .third_contract(&self.anchor, &plus)
                        .expect("checked at build");
                    let tm = oracle
                        .third_contract(&self.anchor, &minus)
                        .expect("checked at build");
                    let col = (tp - tm) / 4.0;
                    for i in 0..d {
                        h[(i, j)] += col[i];
                    }
                }
                Ok(h)
            }
        }
    }
}

/// The error constants an effective approximation satisfies, when the
/// relevant Lipschitz constants are known. Never consulted at solve time;
/// tests instantiate them to pin the remainder bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveConstants {
    /// Coefficient of `||y - x||^p` in the global value bound.
    pub kappa_bar: f64,
    /// Coefficient of `||y - x||^{p+1}` in the global value bound.
    pub kappa: f64,
    /// Coefficient of `||xbar - x||^{p+1}` in the value bound at solutions.
    pub beta: f64,
    /// Coefficient of `||xbar - x||^p` in the gradient bound at solutions.
    pub rho: f64,
}

impl EffectiveConstants {
    /// Constants for a given variant. `lp` is the Lipschitz constant of the
    /// order-`p` derivative; the inexact-Hessian variant additionally needs
    /// the gradient Lipschitz constant `l1` and the coupled deviation
    /// coefficient `kappa` with `||H - hess f|| <= kappa ||step||`.
    pub fn for_variant(
        variant: ModelVariant,
        p: usize,
        lp: f64,
        inexact: Option<(f64, f64)>,
    ) -> Result<Self> {
        let fact = |n: usize| (1..=n).product::<usize>() as f64;
        match variant {
            ModelVariant::FirstOrder => Ok(Self {
                kappa_bar: 0.0,
                kappa: lp / 2.0,
                beta: lp / 2.0,
                rho: lp,
            }),
            ModelVariant::ExactHessian => Ok(Self {
                kappa_bar: 0.0,
                kappa: lp / 6.0,
                beta: lp / 6.0,
                rho: lp / 2.0,
            }),
            ModelVariant::InexactHessian => {
                let (l1, kappa_dev) = inexact.ok_or_else(|| {
                    Error::InvalidArgument("inexact-Hessian constants need (L1, kappa)".into())
                })?;
                Ok(Self {
                    kappa_bar: l1,
                    kappa: lp / 6.0,
                    beta: (lp + 3.0 * kappa_dev) / 6.0,
                    rho: (lp + 2.0 * kappa_dev) / 2.0,
                })
            }
            ModelVariant::TaylorP => Ok(Self {
                kappa_bar: 0.0,
                kappa: lp / fact(p + 1),
                beta: lp / fact(p + 1),
                rho: lp / fact(p),
            }),
        }
    }
}

/// Forward-gradient-difference Hessian surrogate: symmetrizes the matrix of
/// `d` forward differences and shifts the diagonal by `kappa_c * h`.
/// Consumes exactly `d + 1` gradient evaluations.
pub fn inexact_hessian(
    oracle: &dyn SmoothOracle,
    x: &DVector<f64>,
    h: f64,
    kappa_c: f64,
) -> Result<DMatrix<f64>> {
    if h <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step {h} must be positive"
        )));
    }
    if kappa_c < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "kappa_c {kappa_c} must be nonnegative"
        )));
    }
    let d = x.len();
    let g0 = oracle.gradient(x);
    let mut a = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut xj = x.clone();
        xj[j] += h;
        let gj = oracle.gradient(&xj);
        let col = (gj - &g0) / h;
        for i in 0..d {
            a[(i, j)] = col[i];
        }
    }
    let mut hess = (&a + a.transpose()) * 0.5;
    for j in 0..d {
        hess[(j, j)] += kappa_c * h;
    }
    Ok(hess)
}

/// Output of the coupled h-search.
#[derive(Debug)]
pub struct StepCoupled {
    pub h: f64,
    pub hessian: DMatrix<f64>,
    pub step: DVector<f64>,
}

/// Searches for a finite-difference step `h` coupled to the trial step it
/// induces: `h <= kappa_hs * ||s||` where `s = solve(H(h))`. Starts from `h0`
/// and contracts geometrically, so the loop terminates whenever `||s||` stays
/// bounded away from zero.
pub fn step_coupled_hessian(
    oracle: &dyn SmoothOracle,
    x: &DVector<f64>,
    h0: f64,
    kappa_hs: f64,
    kappa_c: f64,
    max_h_iters: usize,
    mut solve: impl FnMut(&DMatrix<f64>) -> DVector<f64>,
) -> Result<StepCoupled> {
    if kappa_hs <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "kappa_hs {kappa_hs} must be positive"
        )));
    }
    let mut h = if h0 > 0.0 { h0 } else { 1.0 };
    let mut last: Option<(f64, DMatrix<f64>, DVector<f64>)> = None;
    for it in 0..max_h_iters {
        let hessian = inexact_hessian(oracle, x, h, kappa_c)?;
        let step = solve(&hessian);
        let step_norm = step.norm();
        if h <= kappa_hs * step_norm {
            return Ok(StepCoupled { h, hessian, step });
        }
        if step_norm == 0.0 {
            return Err(Error::CouplingFailure {
                iters: it + 1,
                h,
                step_norm,
                last_step: step,
            });
        }
        let next = (h.min(kappa_hs * step_norm)) / 2.0;
        last = Some((h, hessian, step));
        h = next;
    }
    let (h, _, step) = last.expect("at least one trial before exhausting the cap");
    Err(Error::CouplingFailure {
        iters: max_h_iters,
        h,
        step_norm: step.norm(),
        last_step: step,
    })
}

/// The regularized per-iteration subproblem
/// `m(y; x, sigma) = mbar(y; x) + sigma ||y - x||^{p+1} / (p+1) + r(y)`.
pub struct RegularizedModel<'a> {
    base: &'a EffectiveModel,
    sigma: f64,
    problem: &'a CompositeProblem,
}

impl<'a> RegularizedModel<'a> {
    pub fn new(base: &'a EffectiveModel, sigma: f64, problem: &'a CompositeProblem) -> Self {
        assert!(sigma >= 0.0, "regularization weight must be nonnegative");
        Self {
            base,
            sigma,
            problem,
        }
    }

    pub fn base(&self) -> &EffectiveModel {
        self.base
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn problem(&self) -> &CompositeProblem {
        self.problem
    }

    pub fn order(&self) -> usize {
        self.base.order
    }

    pub fn anchor(&self) -> &DVector<f64> {
        &self.base.anchor
    }

    /// Smooth part `mbar(y) + sigma ||y - x||^{p+1}/(p+1)`.
    pub fn smooth_value(&self, y: &DVector<f64>) -> f64 {
        let p = self.base.order as i32;
        let dist = (y - &self.base.anchor).norm();
        self.base.value(y) + self.sigma * dist.powi(p + 1) / (p as f64 + 1.0)
    }

    /// Gradient of the smooth part: `grad mbar(y) + sigma ||s||^{p-1} s`.
    pub fn smooth_grad(&self, y: &DVector<f64>) -> DVector<f64> {
        let p = self.base.order as i32;
        let s = y - &self.base.anchor;
        let dist = s.norm();
        self.base.grad(y) + s * (self.sigma * dist.powi(p - 1))
    }

    /// Full model value `m(y; x, sigma)` including the nonsmooth term.
    pub fn value(&self, y: &DVector<f64>) -> f64 {
        self.smooth_value(y) + self.problem.r_eval(y)
    }

    /// `m(x; x, sigma) = F(x)`, the value at the anchor.
    pub fn anchor_value(&self) -> f64 {
        self.base.f_anchor + self.problem.r_eval(&self.base.anchor)
    }

    /// Hessian of the smooth part at `y` (model plus regularizer curvature).
    pub fn smooth_hessian_at(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        let p = self.base.order as i32;
        let s = y - &self.base.anchor;
        let dist = s.norm();
        let mut h = self.base.hessian_at(y)?;
        if dist > 0.0 {
            h += &s * s.transpose() * (self.sigma * (p as f64 - 1.0) * dist.powi(p - 3));
            let shift = self.sigma * dist.powi(p - 1);
            for j in 0..h.nrows() {
                h[(j, j)] += shift;
            }
        }
        Ok(h)
    }
}

/// Outcome of the inexactness test for a trial subproblem solution.
#[derive(Debug, Clone, Copy)]
pub struct CriterionCheck {
    pub satisfied: bool,
    /// `|| grad mbar(xbar) + sigma ||s||^{p-1} s + xi ||`.
    pub residual: f64,
    /// `kappa_theta * ||s||^p`.
    pub bound: f64,
    /// Whether the model did not increase: `m(xbar) <= m(x)`.
    pub decreased: bool,
}

/// Checks the two-part inexactness criterion for `xbar` with subgradient `xi`:
/// the stationarity residual is within `kappa_theta ||s||^p` and the model
/// value did not increase relative to the anchor.
pub fn residual_criterion(
    model: &RegularizedModel<'_>,
    x_bar: &DVector<f64>,
    xi: &DVector<f64>,
    kappa_theta: f64,
) -> CriterionCheck {
    let p = model.base.order as i32;
    let s = x_bar - &model.base.anchor;
    let dist = s.norm();
    let residual = (model.base.grad(x_bar) + &s * (model.sigma * dist.powi(p - 1)) + xi).norm();
    let bound = kappa_theta * dist.powi(p);
    let anchor_val = model.anchor_value();
    let decreased = model.value(x_bar) <= anchor_val + 1e-12 * (1.0 + anchor_val.abs());
    CriterionCheck {
        satisfied: residual <= bound && decreased,
        residual,
        bound,
        decreased,
    }
}

/// Verifies positive semidefiniteness of the regularized model's Hessian at a
/// single point. Models of order <= 2 are convex by construction and return
/// `true` without computation.
pub fn pointwise_convexity_check(model: &RegularizedModel<'_>, y: &DVector<f64>) -> Result<bool> {
    if model.base.order <= 2 {
        return Ok(true);
    }
    let h = model.smooth_hessian_at(y)?;
    let eig = SymmetricEigen::new(h);
    let lambda_min = eig.eigenvalues.min();
    let scale = eig.eigenvalues.amax();
    Ok(lambda_min >= -1e-10 * (1.0 + scale))
}
