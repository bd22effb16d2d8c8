//! Logistic-regression objectives over sparse datasets.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::{CompositeProblem, Dataset, L1Reg, ProxTerm, SmoothOracle};

/// `ln(1 + exp(z))` without overflow for large `|z|`.
#[inline]
fn ln1pexp(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `1 / (1 + exp(-u))`, evaluated on the side that avoids overflow.
#[inline]
fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Mean logistic loss plus an optional ridge term:
/// `f(x) = (1/n) sum_i ln(1 + exp(-b_i a_i^T x)) + (ridge/2) ||x||^2`.
#[derive(Clone)]
pub struct LogisticOracle {
    data: Arc<Dataset>,
    ridge: f64,
}

impl LogisticOracle {
    pub fn new(data: impl Into<Arc<Dataset>>, ridge: f64) -> Result<Self> {
        if ridge < 0.0 {
            return Err(Error::InvalidArgument(format!("negative ridge {ridge}")));
        }
        Ok(Self {
            data: data.into(),
            ridge,
        })
    }

    /// Sigmoid weights `s_i = sigmoid(-b_i a_i^T x)` for each sample.
    fn weights(&self, x: &DVector<f64>) -> Vec<f64> {
        (0..self.data.n())
            .map(|i| sigmoid(-self.data.label(i) * self.data.row_dot(i, x)))
            .collect()
    }
}

impl SmoothOracle for LogisticOracle {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let n = self.data.n() as f64;
        let loss: f64 = (0..self.data.n())
            .map(|i| ln1pexp(-self.data.label(i) * self.data.row_dot(i, x)))
            .sum();
        loss / n + 0.5 * self.ridge * x.norm_squared()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.data.n() as f64;
        let mut g = x * self.ridge;
        for i in 0..self.data.n() {
            let b = self.data.label(i);
            let s = sigmoid(-b * self.data.row_dot(i, x));
            let coeff = -b * s / n;
            for &(j, v) in self.data.row(i) {
                g[j] += coeff * v;
            }
        }
        g
    }

    fn hessian_vec(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let n = self.data.n() as f64;
        let mut out = v * self.ridge;
        for (i, s) in self.weights(x).into_iter().enumerate() {
            let av: f64 = self.data.row(i).iter().map(|&(j, a)| a * v[j]).sum();
            let coeff = s * (1.0 - s) * av / n;
            for &(j, a) in self.data.row(i) {
                out[j] += coeff * a;
            }
        }
        out
    }

    fn full_hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let d = self.dim();
        let n = self.data.n() as f64;
        let mut h = DMatrix::from_diagonal_element(d, d, self.ridge);
        for (i, s) in self.weights(x).into_iter().enumerate() {
            let w = s * (1.0 - s) / n;
            for &(j, a) in self.data.row(i) {
                for &(k, b) in self.data.row(i) {
                    h[(j, k)] += w * a * b;
                }
            }
        }
        Some(h)
    }

    fn order(&self) -> usize {
        2
    }
}

/// The l2-regularized logistic objective `(1/n) sum ln(1+exp(-b a^T x)) + (lambda/2)||x||^2`.
pub fn logistic_l2_oracle(data: impl Into<Arc<Dataset>>, lambda: f64) -> Result<LogisticOracle> {
    LogisticOracle::new(data, lambda)
}

/// The l1-regularized composite problem: mean logistic loss plus `lambda ||x||_1`.
pub fn logistic_l1_problem(data: impl Into<Arc<Dataset>>, lambda: f64) -> Result<CompositeProblem> {
    let smooth = LogisticOracle::new(data, 0.0)?;
    let r: Arc<dyn ProxTerm> = Arc::new(L1Reg::new(lambda)?);
    Ok(CompositeProblem::with_nonsmooth(Arc::new(smooth), r))
}
