//! The accumulated auxiliary model that steers the acceleration:
//! an affine lower model plus a tau-weighted power regularizer, with a
//! closed-form minimizer and a tau escalation test.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// `psi_j(z, tau) = a + g^T z + tau ||z - anchor||^{p+1} / (2(p+1))`.
///
/// The affine part accumulates one scaled linearization per successful
/// iterate; `coef` and `target` are the degree-(p+1) rising products
/// maintained incrementally.
#[derive(Debug, Clone)]
pub struct AuxModel {
    anchor: DVector<f64>,
    a: f64,
    g: DVector<f64>,
    tau: f64,
    p: usize,
    j: usize,
    coef: f64,
    target: f64,
}

/// Outcome of a tau escalation round.
#[derive(Debug, Clone)]
pub struct TauEscalation {
    pub tau: f64,
    pub z: DVector<f64>,
    pub psi: f64,
    pub escalations: usize,
}

impl AuxModel {
    /// Initial model: the affine part is the constant `f0`, so the minimizer
    /// is the anchor itself with value `f0`.
    pub fn init(anchor: DVector<f64>, f0: f64, tau0: f64, p: usize) -> Result<Self> {
        if tau0 <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "tau0 {tau0} must be positive"
            )));
        }
        if p == 0 {
            return Err(Error::InvalidArgument("order p must be at least 1".into()));
        }
        let dim = anchor.len();
        // coef(0) = prod_{l=2..p+1} l / p! = p+1, target(0) = (p+1)!/(p+1)! = 1
        Ok(Self {
            anchor,
            a: f0,
            g: DVector::zeros(dim),
            tau: tau0,
            p,
            j: 0,
            coef: (p + 1) as f64,
            target: 1.0,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn successes(&self) -> usize {
        self.j
    }

    pub fn order(&self) -> usize {
        self.p
    }

    /// Current accumulation weight `prod_{l=2..p+1}(j+l) / p!`.
    pub fn coef(&self) -> f64 {
        self.coef
    }

    /// Current target weight `prod_{l=1..p+1}(j+l) / (p+1)!`.
    pub fn target(&self) -> f64 {
        self.target
    }

    /// Target weight for the next successful iterate, `target(j+1)`.
    pub fn target_next(&self) -> f64 {
        self.target * (self.j + self.p + 2) as f64 / (self.j + 1) as f64
    }

    /// Evaluates `psi(z, tau)`.
    pub fn psi(&self, z: &DVector<f64>, tau: f64) -> f64 {
        let dist = (z - &self.anchor).norm();
        self.a + self.g.dot(z) + tau * dist.powi(self.p as i32 + 1) / (2.0 * (self.p as f64 + 1.0))
    }

    /// Gradient of `psi(., tau)` at `z`.
    pub fn grad_psi(&self, z: &DVector<f64>, tau: f64) -> DVector<f64> {
        let s = z - &self.anchor;
        let dist = s.norm();
        &self.g + s * (0.5 * tau * dist.powi(self.p as i32 - 1))
    }

    /// Adds the scaled linearization of the new iterate: `v` must be the
    /// composite gradient `grad f(x_next) + xi_next` at that iterate.
    /// The success counter advances separately via [`AuxModel::advance`].
    pub fn accumulate(&mut self, x_next: &DVector<f64>, f_next: f64, v: &DVector<f64>) {
        self.a += self.coef * (f_next - x_next.dot(v));
        self.g += v * self.coef;
    }

    /// Closed-form minimizer of `psi(., tau)`:
    /// `z* = anchor - (2 ||g|| / tau)^{1/p} g / ||g||`, value by substitution.
    pub fn minimize(&self, tau: f64) -> Result<(DVector<f64>, f64)> {
        if tau <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "tau {tau} must be positive"
            )));
        }
        let g_norm = self.g.norm();
        if g_norm == 0.0 {
            let psi = self.a + self.g.dot(&self.anchor);
            return Ok((self.anchor.clone(), psi));
        }
        let dist = (2.0 * g_norm / tau).powf(1.0 / self.p as f64);
        let z = &self.anchor - &self.g * (dist / g_norm);
        let psi = self.a
            + self.g.dot(&z)
            + tau * dist.powi(self.p as i32 + 1) / (2.0 * (self.p as f64 + 1.0));
        Ok((z, psi))
    }

    /// Multiplies tau by `gamma3` until the freshly minimized model dominates
    /// `target(j+1) * f_next`. With `escalate_first` the multiplication
    /// happens before the first test (the greedier schedule); otherwise the
    /// current tau is tested first so tau only grows when it has to.
    pub fn escalate_tau(
        &mut self,
        f_next: f64,
        gamma3: f64,
        escalate_first: bool,
        cap: usize,
    ) -> Result<TauEscalation> {
        if gamma3 <= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "gamma3 {gamma3} must exceed 1"
            )));
        }
        let threshold = self.target_next() * f_next;
        let mut escalations = 0usize;
        if escalate_first {
            self.tau *= gamma3;
            escalations += 1;
        }
        loop {
            let (z, psi) = self.minimize(self.tau)?;
            if psi >= threshold {
                return Ok(TauEscalation {
                    tau: self.tau,
                    z,
                    psi,
                    escalations,
                });
            }
            if escalations >= cap {
                return Err(Error::EscalationFailure { cap, tau: self.tau });
            }
            self.tau *= gamma3;
            escalations += 1;
        }
    }

    /// Advances the success counter and the rising products.
    pub fn advance(&mut self) {
        let j = self.j as f64;
        let p = self.p as f64;
        self.coef *= (j + p + 2.0) / (j + 2.0);
        self.target *= (j + p + 2.0) / (j + 1.0);
        self.j += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rvec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> DVector<f64> {
        DVector::from_fn(d, |_, _| rng.gen_range(-scale..scale))
    }

    fn products_direct(j: usize, p: usize) -> (f64, f64) {
        let coef: f64 = (2..=p + 1).map(|l| (j + l) as f64).product::<f64>()
            / (1..=p).map(|v| v as f64).product::<f64>();
        let target: f64 = (1..=p + 1).map(|l| (j + l) as f64).product::<f64>()
            / (1..=p + 1).map(|v| v as f64).product::<f64>();
        (coef, target)
    }

    #[test]
    fn init_minimizer_is_the_anchor() {
        let anchor = DVector::from_vec(vec![1.0, -2.0]);
        let aux = AuxModel::init(anchor.clone(), 3.5, 1.0, 2).unwrap();
        let (z, psi) = aux.minimize(1.0).unwrap();
        assert_eq!(z, anchor);
        assert_eq!(psi, 3.5);
    }

    #[test]
    fn init_rejects_nonpositive_tau() {
        assert!(AuxModel::init(DVector::zeros(2), 0.0, 0.0, 2).is_err());
    }

    #[test]
    fn psi_at_unit_distance_matches_arithmetic() {
        // p = 2, tau = 1, ||z - anchor|| = 1: psi - f0 = 1/6
        let aux = AuxModel::init(DVector::zeros(2), 2.0, 1.0, 2).unwrap();
        let z = DVector::from_vec(vec![1.0, 0.0]);
        assert!((aux.psi(&z, 1.0) - 2.0 - 1.0 / 6.0).abs() <= 1e-15);
    }

    #[test]
    fn initial_coef_matches_rising_product() {
        for p in 1..=4 {
            let aux = AuxModel::init(DVector::zeros(1), 0.0, 1.0, p).unwrap();
            let (coef, target) = products_direct(0, p);
            assert_eq!(aux.coef(), coef); // p = 2 gives (0+2)(0+3)/2! = 3
            assert_eq!(aux.target(), target);
        }
    }

    #[test]
    fn accumulate_with_zero_gradient_only_shifts_scalar() {
        let mut aux = AuxModel::init(DVector::zeros(2), 1.0, 1.0, 2).unwrap();
        let x = DVector::from_vec(vec![0.4, -0.1]);
        aux.accumulate(&x, 2.0, &DVector::zeros(2));
        let (z, psi) = aux.minimize(1.0).unwrap();
        assert_eq!(z, DVector::zeros(2));
        assert_eq!(psi, 1.0 + 3.0 * 2.0); // coef(0) = 3 for p = 2
    }

    #[test]
    fn accumulations_commute_additively() {
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        let anchor = rvec(&mut rng, 3, 1.0);
        let mut one = AuxModel::init(anchor.clone(), 0.7, 1.0, 2).unwrap();
        let mut two = AuxModel::init(anchor, 0.7, 1.0, 2).unwrap();
        let x1 = rvec(&mut rng, 3, 1.0);
        let x2 = rvec(&mut rng, 3, 1.0);
        let v1 = rvec(&mut rng, 3, 1.0);
        let v2 = rvec(&mut rng, 3, 1.0);
        one.accumulate(&x1, 0.3, &v1);
        one.accumulate(&x2, -0.2, &v2);
        // the combined affine update applied in one shot
        let coef = two.coef();
        let combined_a = coef * (0.3 - x1.dot(&v1)) + coef * (-0.2 - x2.dot(&v2));
        let combined_v = (&v1 + &v2) * coef;
        two.a += combined_a;
        two.g += combined_v;
        let z = rvec(&mut rng, 3, 2.0);
        assert!((one.psi(&z, 1.0) - two.psi(&z, 1.0)).abs() <= 1e-12);
    }

    #[test]
    fn closed_form_minimizer_p1_hand_check() {
        let mut aux = AuxModel::init(DVector::zeros(2), 0.0, 2.0, 1).unwrap();
        // force g = (1, 0) through an accumulate with coef(0) = 2 for p = 1
        aux.accumulate(&DVector::zeros(2), 0.0, &DVector::from_vec(vec![0.5, 0.0]));
        assert_eq!(aux.g, DVector::from_vec(vec![1.0, 0.0]));
        let (z, psi) = aux.minimize(2.0).unwrap();
        assert!((z - DVector::from_vec(vec![-1.0, 0.0])).norm() <= 1e-15);
        assert!((psi - (-0.5)).abs() <= 1e-15);
    }

    #[test]
    fn minimizer_is_stationary_and_beats_ray_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for p in [1usize, 2, 3] {
            for _ in 0..20 {
                let anchor = rvec(&mut rng, 4, 1.0);
                let mut aux =
                    AuxModel::init(anchor.clone(), rng.gen_range(-1.0..1.0), 1.0, p).unwrap();
                aux.accumulate(
                    &rvec(&mut rng, 4, 1.0),
                    rng.gen_range(-1.0..1.0),
                    &rvec(&mut rng, 4, 1.0),
                );
                let tau = rng.gen_range(0.2..5.0);
                let (z, psi) = aux.minimize(tau).unwrap();
                assert!(aux.grad_psi(&z, tau).norm() <= 1e-10 * (1.0 + aux.g.norm()));
                // psi is radially symmetric around the anchor in the g
                // direction, so a dense ray search is a global oracle
                let dir = -&aux.g / aux.g.norm();
                let t_star = (&z - &anchor).norm();
                let mut grid_best = f64::INFINITY;
                for k in 0..=4000 {
                    let t = 3.0 * t_star * k as f64 / 4000.0;
                    grid_best = grid_best.min(aux.psi(&(&anchor + &dir * t), tau));
                }
                assert!(psi <= grid_best + 1e-9 * (1.0 + psi.abs()));
            }
        }
    }

    #[test]
    fn growth_bound_away_from_minimizer() {
        // psi(z) - psi(z*) >= (tau / 2^p) ||z - z*||^{p+1} / (p+1)
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        for p in [1usize, 2, 3] {
            for _ in 0..100 {
                let anchor = rvec(&mut rng, 3, 1.0);
                let mut aux = AuxModel::init(anchor, rng.gen_range(-1.0..1.0), 1.0, p).unwrap();
                aux.accumulate(
                    &rvec(&mut rng, 3, 1.0),
                    rng.gen_range(-1.0..1.0),
                    &rvec(&mut rng, 3, 1.0),
                );
                let tau = rng.gen_range(0.2..4.0);
                let (z_star, psi_star) = aux.minimize(tau).unwrap();
                let z = rvec(&mut rng, 3, 3.0);
                let lhs = aux.psi(&z, tau) - psi_star;
                let rhs = tau / 2f64.powi(p as i32) * (&z - &z_star).norm().powi(p as i32 + 1)
                    / (p as f64 + 1.0);
                assert!(lhs >= rhs - 1e-10 * (1.0 + lhs.abs()));
            }
        }
    }

    #[test]
    fn escalation_noop_when_signs_align() {
        // f_next <= 0 and psi >= 0 at the current tau: no escalation needed.
        let mut aux = AuxModel::init(DVector::zeros(2), 1.0, 1.0, 2).unwrap();
        let out = aux.escalate_tau(-0.5, 2.0, false, 200).unwrap();
        assert_eq!(out.escalations, 0);
        assert_eq!(out.tau, 1.0);
    }

    #[test]
    fn escalation_with_zero_gradient_cannot_be_fixed_by_tau() {
        // g = 0 makes psi independent of tau: either passes at once or caps out.
        let mut aux = AuxModel::init(DVector::zeros(2), 1.0, 1.0, 2).unwrap();
        let ok = aux.escalate_tau(0.1, 2.0, false, 50).unwrap();
        assert_eq!(ok.escalations, 0);
        let mut aux = AuxModel::init(DVector::zeros(2), 1.0, 1.0, 2).unwrap();
        let err = aux.escalate_tau(10.0, 2.0, false, 50).unwrap_err();
        assert!(matches!(err, Error::EscalationFailure { cap: 50, .. }));
    }

    #[test]
    fn escalation_count_follows_the_constructed_threshold() {
        // 1-D reduction: with anchor 0, a = 3 f_next and g = (0.3, 0),
        // psi_min(tau) = a - (2 sqrt(2)/3) ||g||^{3/2} / sqrt(tau), so the
        // test passes exactly when tau >= 2.4003 (f_next = -0.1).
        let build = || {
            let mut aux = AuxModel::init(DVector::zeros(2), 0.0, 2.0, 2).unwrap();
            aux.accumulate(&DVector::zeros(2), -0.1, &DVector::from_vec(vec![0.1, 0.0]));
            aux
        };
        let tau_needed = {
            let g: f64 = 0.3;
            let num = 2.0 * 2f64.sqrt() / 3.0 * g.powf(1.5);
            (num / 0.1).powi(2) // threshold - a = 4*(-0.1) - 3*(-0.1) = -0.1
        };
        assert!(tau_needed > 2.0 && tau_needed < 4.0);

        let mut aux = build();
        let out = aux.escalate_tau(-0.1, 2.0, false, 200).unwrap();
        assert_eq!(out.escalations, 1);
        assert_eq!(out.tau, 4.0);
        assert!(out.psi >= aux.target_next() * -0.1);

        // a larger gamma3 still needs one multiplication but lands higher
        let mut aux = build();
        let out4 = aux.escalate_tau(-0.1, 4.0, false, 200).unwrap();
        assert_eq!(out4.escalations, 1);
        assert_eq!(out4.tau, 8.0);

        // starting above the threshold needs none
        let mut aux = AuxModel::init(DVector::zeros(2), 0.0, 2.5, 2).unwrap();
        aux.accumulate(&DVector::zeros(2), -0.1, &DVector::from_vec(vec![0.1, 0.0]));
        assert_eq!(
            aux.escalate_tau(-0.1, 2.0, false, 200).unwrap().escalations,
            0
        );
    }

    #[test]
    fn strict_listing_always_multiplies_first() {
        let mut aux = AuxModel::init(DVector::zeros(2), 1.0, 1.0, 2).unwrap();
        let out = aux.escalate_tau(-0.5, 2.0, true, 200).unwrap();
        assert_eq!(out.escalations, 1);
        assert_eq!(out.tau, 2.0);
    }

    #[test]
    fn incremental_products_track_direct_evaluation() {
        for p in [1usize, 2, 3] {
            let mut aux = AuxModel::init(DVector::zeros(1), 0.0, 1.0, p).unwrap();
            for j in 0..100_000usize {
                if j % 9_973 == 0 {
                    let (coef, target) = products_direct(j, p);
                    assert!((aux.coef() - coef).abs() <= 1e-12 * coef);
                    assert!((aux.target() - target).abs() <= 1e-12 * target);
                    if j >= 1 {
                        // consistency of the incremental ratio
                        let (_, target_prev) = products_direct(j - 1, p);
                        let ratio = target / target_prev;
                        assert!((ratio - (j + p + 1) as f64 / j as f64).abs() <= 1e-12 * ratio);
                    }
                }
                aux.advance();
            }
        }
    }
}
