//! Objective oracles, composite problems and data ingestion.

mod libsvm;
mod logistic;
mod oracles;

pub use libsvm::parse_libsvm;
pub use logistic::{logistic_l1_problem, logistic_l2_oracle, LogisticOracle};
pub use oracles::{
    CountingOracle, CubicPolyOracle, ExpInnerOracle, LogSumExpOracle, QuadraticOracle,
};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A binary-classification dataset held as sparse rows with labels in {-1, +1}.
///
/// Feature indices are 0-based internally; the LIBSVM text format is 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<Vec<(usize, f64)>>,
    labels: Vec<f64>,
    dim: usize,
}

impl Dataset {
    /// Builds a dataset from parts, enforcing the structural invariants:
    /// labels in {-1, +1}, indices strictly increasing and within `[0, dim)`.
    pub fn new(rows: Vec<Vec<(usize, f64)>>, labels: Vec<f64>, dim: usize) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "row count {} != label count {}",
                rows.len(),
                labels.len()
            )));
        }
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for (i, label) in labels.iter().enumerate() {
            if *label != 1.0 && *label != -1.0 {
                return Err(Error::InvalidArgument(format!(
                    "label {label} at row {i} is not +/-1"
                )));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            let mut prev: Option<usize> = None;
            for &(idx, val) in row {
                if idx >= dim {
                    return Err(Error::InvalidArgument(format!(
                        "feature index {idx} out of range [0, {dim}) at row {i}"
                    )));
                }
                if let Some(p) = prev {
                    if idx <= p {
                        return Err(Error::InvalidArgument(format!(
                            "non-increasing feature index {idx} at row {i}"
                        )));
                    }
                }
                if !val.is_finite() {
                    return Err(Error::NonFinite("dataset feature value"));
                }
                prev = Some(idx);
            }
        }
        Ok(Self { rows, labels, dim })
    }

    /// Number of samples.
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    /// Sparse dot product of row `i` with a dense vector.
    pub fn row_dot(&self, i: usize, x: &DVector<f64>) -> f64 {
        self.rows[i].iter().map(|&(j, v)| v * x[j]).sum()
    }

    /// Serializes back to LIBSVM text (1-based indices, one sample per line).
    ///
    /// Values use the shortest round-trip float formatting, so
    /// `parse_libsvm(dataset.to_libsvm_string())` reproduces the dataset exactly.
    pub fn to_libsvm_string(&self) -> String {
        let mut out = String::new();
        for (row, label) in self.rows.iter().zip(&self.labels) {
            out.push_str(if *label > 0.0 { "+1" } else { "-1" });
            for &(idx, val) in row {
                out.push_str(&format!(" {}:{}", idx + 1, val));
            }
            out.push('\n');
        }
        out
    }
}

/// Evaluator for a smooth convex function: value, gradient, Hessian-vector
/// products and (optionally) the materialized Hessian and third-order
/// contractions needed by higher-order models.
///
/// Implementations must be pure: repeated calls with the same input return
/// the same output, so oracles are freely shareable across solver runs.
pub trait SmoothOracle: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &DVector<f64>) -> f64;

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Action of the Hessian on `v`, linear in `v`.
    fn hessian_vec(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;

    /// Materialized symmetric Hessian, when the oracle exposes one.
    fn full_hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// The vector `T[v, v]` where `T` is the third derivative tensor at `x`.
    fn third_contract(&self, _x: &DVector<f64>, _v: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    /// Highest derivative order the oracle exposes exactly.
    fn order(&self) -> usize;
}

/// A convex nonsmooth term with a cheap proximal mapping.
pub trait ProxTerm: Send + Sync {
    fn eval(&self, x: &DVector<f64>) -> f64;

    /// `argmin_z r(z) + ||z - v||^2 / (2 t)` for `t > 0`.
    fn prox(&self, v: &DVector<f64>, t: f64) -> DVector<f64>;
}

/// Scaled l1 norm `lambda * ||x||_1`; prox is coordinatewise soft-thresholding.
#[derive(Debug, Clone)]
pub struct L1Reg {
    lambda: f64,
}

impl L1Reg {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda < 0.0 {
            return Err(Error::InvalidArgument(format!("negative lambda {lambda}")));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl ProxTerm for L1Reg {
    fn eval(&self, x: &DVector<f64>) -> f64 {
        self.lambda * x.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn prox(&self, v: &DVector<f64>, t: f64) -> DVector<f64> {
        let level = t * self.lambda;
        v.map(|vi| vi.signum() * (vi.abs() - level).max(0.0))
    }
}

/// A composite objective `F = f + r` where `f` is smooth convex and `r` is
/// convex with an easy proximal mapping (`r = 0` allowed).
#[derive(Clone)]
pub struct CompositeProblem {
    smooth: Arc<dyn SmoothOracle>,
    nonsmooth: Option<Arc<dyn ProxTerm>>,
}

impl CompositeProblem {
    /// Smooth problem: `r = 0`.
    pub fn smooth(oracle: Arc<dyn SmoothOracle>) -> Self {
        Self {
            smooth: oracle,
            nonsmooth: None,
        }
    }

    pub fn with_nonsmooth(oracle: Arc<dyn SmoothOracle>, r: Arc<dyn ProxTerm>) -> Self {
        Self {
            smooth: oracle,
            nonsmooth: Some(r),
        }
    }

    pub fn oracle(&self) -> &dyn SmoothOracle {
        self.smooth.as_ref()
    }

    pub fn oracle_arc(&self) -> Arc<dyn SmoothOracle> {
        Arc::clone(&self.smooth)
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }

    pub fn has_nonsmooth(&self) -> bool {
        self.nonsmooth.is_some()
    }

    pub fn r_eval(&self, x: &DVector<f64>) -> f64 {
        match &self.nonsmooth {
            Some(r) => r.eval(x),
            None => 0.0,
        }
    }

    /// Proximal mapping of `r`; the identity when `r = 0`.
    pub fn prox(&self, v: &DVector<f64>, t: f64) -> DVector<f64> {
        match &self.nonsmooth {
            Some(r) => r.prox(v, t),
            None => v.clone(),
        }
    }

    /// Composite objective `F(x) = f(x) + r(x)`.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        self.smooth.value(x) + self.r_eval(x)
    }
}

/// Recovers the subgradient certified by a proximal step: if
/// `x_post = prox(v_pre, 1/alpha)` then `alpha * (v_pre - x_post)` lies in
/// the subdifferential of `r` at `x_post` by prox optimality.
pub fn subgradient_from_prox(
    v_pre: &DVector<f64>,
    x_post: &DVector<f64>,
    alpha: f64,
) -> Result<DVector<f64>> {
    if alpha <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} must be positive"
        )));
    }
    Ok((v_pre - x_post) * alpha)
}

/// Composite stationarity measure: `||alpha (x - prox(x - grad f(x)/alpha, 1/alpha))||`.
///
/// Collapses to `||grad f(x)||` exactly when `r = 0`.
pub fn gradient_mapping_norm(problem: &CompositeProblem, x: &DVector<f64>, alpha: f64) -> f64 {
    assert!(alpha > 0.0, "gradient mapping needs alpha > 0");
    let grad = problem.oracle().gradient(x);
    if !problem.has_nonsmooth() {
        return grad.norm();
    }
    let forward = x - &grad / alpha;
    let mapped = problem.prox(&forward, 1.0 / alpha);
    ((x - mapped) * alpha).norm()
}
