//! Empirical rate verification on solver traces: log-log slope of the
//! optimality gap over successful accelerated iterations, plus the sigma/tau
//! bookkeeping checks a well-formed trace must satisfy.

use uaa_core::driver::{Phase, TraceRecord};

/// Numerical floor below which gaps are dropped from the fit.
pub const DEFAULT_GAP_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct RateOptions {
    /// Model order; the theoretical gap decay is `j^{-(p+1)}`.
    pub p: usize,
    /// Inclusive window of successful-iteration indices (1-based) to fit.
    pub window: (usize, usize),
    /// Slack added to the theoretical slope for the pass test.
    pub slack: f64,
    pub gap_floor: f64,
    /// Optimal value; when absent the best F seen in the trace minus a small
    /// margin stands in.
    pub fstar: Option<f64>,
    /// Complexity-bound constant: checks `gap_j <= C / prod_{l=1..p+1}(j+l)`
    /// pointwise when supplied (needs `fstar` too).
    pub cbound: Option<f64>,
    pub gamma1: f64,
    pub gamma2: f64,
    pub sigma_min: f64,
}

impl RateOptions {
    pub fn new(p: usize) -> Self {
        Self {
            p,
            window: (1, usize::MAX),
            slack: 0.3,
            gap_floor: DEFAULT_GAP_FLOOR,
            fstar: None,
            cbound: None,
            gamma1: 2.0,
            gamma2: 3.0,
            sigma_min: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateVerdict {
    Pass,
    Fail,
    /// Fewer than 10 usable points; not a failure.
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct RateReport {
    pub fitted_slope: Option<f64>,
    pub theoretical_slope: f64,
    pub verdict: RateVerdict,
    /// Pointwise complexity-constant check, when requested.
    pub cbound_ok: Option<bool>,
    /// Sigma updates follow the decrease-on-success / multiply-on-failure
    /// discipline and never sink below the floor.
    pub sigma_ok: bool,
    /// Tau never decreases.
    pub tau_ok: bool,
    /// Failure streaks between successes stay within the adaptive bound.
    pub runs_ok: bool,
    pub points_used: usize,
    pub fstar_used: f64,
}

impl RateReport {
    pub fn passed(&self) -> bool {
        self.verdict == RateVerdict::Pass
            && self.cbound_ok.unwrap_or(true)
            && self.sigma_ok
            && self.tau_ok
            && self.runs_ok
    }
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in points {
        num += (x - mean_x) * (y - mean_y);
        den += (x - mean_x) * (x - mean_x);
    }
    num / den
}

fn check_sigma_discipline(records: &[TraceRecord], opts: &RateOptions) -> bool {
    let eps = 1e-9;
    let adaptive = |p: Phase| matches!(p, Phase::Sas | Phase::Aas | Phase::Arc | Phase::ArcHybrid);
    for w in records.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if !adaptive(a.phase) || !adaptive(b.phase) {
            continue;
        }
        if b.sigma < opts.sigma_min * (1.0 - eps) {
            return false;
        }
        if a.success {
            if b.sigma > a.sigma * (1.0 + eps) {
                return false;
            }
        } else {
            let ratio = b.sigma / a.sigma;
            if ratio < opts.gamma1 * (1.0 - eps) || ratio > opts.gamma2 * (1.0 + eps) {
                return false;
            }
        }
    }
    true
}

fn check_tau_monotone(records: &[TraceRecord]) -> bool {
    let mut last = f64::NEG_INFINITY;
    for r in records {
        if let Some(tau) = r.tau {
            if tau < last * (1.0 - 1e-12) {
                return false;
            }
            last = tau;
        }
    }
    true
}

/// Mirror of the adaptive failure-streak bound: between consecutive
/// successes, failures cannot outnumber the sigma doublings that fit under
/// the largest sigma seen in that streak.
fn check_failure_runs(records: &[TraceRecord], opts: &RateOptions) -> bool {
    let mut streak: Vec<f64> = Vec::new();
    for r in records.iter().filter(|r| r.phase == Phase::Aas) {
        if r.success {
            if !streak_ok(&streak, opts) {
                return false;
            }
            streak.clear();
        } else {
            streak.push(r.sigma);
        }
    }
    streak_ok(&streak, opts)
}

fn streak_ok(streak: &[f64], opts: &RateOptions) -> bool {
    if streak.is_empty() {
        return true;
    }
    let sigma_max = streak.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bound = ((sigma_max / opts.sigma_min).ln() / opts.gamma1.ln()).ceil() as usize + 1;
    streak.len() <= bound
}

/// Fits the decay slope of the optimality gap over successful accelerated
/// iterations and runs the trace-discipline checks.
pub fn verify_rate(records: &[TraceRecord], opts: &RateOptions) -> RateReport {
    let successes: Vec<&TraceRecord> = records
        .iter()
        .filter(|r| r.phase == Phase::Aas && r.success)
        .collect();
    let best_f = records.iter().map(|r| r.f).fold(f64::INFINITY, f64::min);
    let fstar = opts.fstar.unwrap_or(best_f - 1e-14);

    let mut points = Vec::new();
    for (idx, rec) in successes.iter().enumerate() {
        let j = idx + 1;
        if j < opts.window.0 || j > opts.window.1 {
            continue;
        }
        let gap = rec.f - fstar;
        if gap >= opts.gap_floor {
            points.push((j as f64, gap));
        }
    }

    let theoretical_slope = -((opts.p + 1) as f64);
    let sigma_ok = check_sigma_discipline(records, opts);
    let tau_ok = check_tau_monotone(records);
    let runs_ok = check_failure_runs(records, opts);

    let cbound_ok = opts.cbound.map(|c| {
        successes.iter().enumerate().all(|(idx, rec)| {
            let j = idx + 1;
            let prod: f64 = (1..=opts.p + 1).map(|l| (j + l) as f64).product();
            rec.f - fstar <= c / prod + 1e-12
        })
    });

    if points.len() < 10 {
        return RateReport {
            fitted_slope: None,
            theoretical_slope,
            verdict: RateVerdict::Inconclusive,
            cbound_ok,
            sigma_ok,
            tau_ok,
            runs_ok,
            points_used: points.len(),
            fstar_used: fstar,
        };
    }

    let log_points: Vec<(f64, f64)> = points.iter().map(|(j, g)| (j.ln(), g.ln())).collect();
    let slope = least_squares_slope(&log_points);
    let verdict = if slope <= theoretical_slope + opts.slack {
        RateVerdict::Pass
    } else {
        RateVerdict::Fail
    };
    RateReport {
        fitted_slope: Some(slope),
        theoretical_slope,
        verdict,
        cbound_ok,
        sigma_ok,
        tau_ok,
        runs_ok,
        points_used: points.len(),
        fstar_used: fstar,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_trace(exponent: f64, count: usize) -> Vec<TraceRecord> {
        (0..count)
            .map(|idx| {
                let j = (idx + 1) as f64;
                TraceRecord {
                    i: idx,
                    phase: Phase::Aas,
                    success: true,
                    f: j.powf(exponent),
                    grad_map: 0.0,
                    sigma: 1.0,
                    tau: Some(1.0),
                    step_norm: 0.1,
                    inner_iters: 1,
                    theta: Some(1.0),
                    wall_ns: 0,
                }
            })
            .collect()
    }

    #[test]
    fn exact_cubic_decay_passes_for_p2() {
        let trace = synthetic_trace(-3.0, 60);
        let mut opts = RateOptions::new(2);
        opts.fstar = Some(0.0);
        let report = verify_rate(&trace, &opts);
        assert_eq!(report.verdict, RateVerdict::Pass);
        assert!((report.fitted_slope.unwrap() + 3.0).abs() <= 1e-9);
    }

    #[test]
    fn quadratic_decay_fails_p2_but_passes_p1() {
        let trace = synthetic_trace(-2.0, 60);
        let mut opts = RateOptions::new(2);
        opts.fstar = Some(0.0);
        assert_eq!(verify_rate(&trace, &opts).verdict, RateVerdict::Fail);
        let mut opts = RateOptions::new(1);
        opts.fstar = Some(0.0);
        assert_eq!(verify_rate(&trace, &opts).verdict, RateVerdict::Pass);
    }

    #[test]
    fn short_traces_are_inconclusive() {
        let trace = synthetic_trace(-3.0, 5);
        let mut opts = RateOptions::new(2);
        opts.fstar = Some(0.0);
        let report = verify_rate(&trace, &opts);
        assert_eq!(report.verdict, RateVerdict::Inconclusive);
        assert!(report.fitted_slope.is_none());
    }

    #[test]
    fn window_limits_the_fit() {
        // steep early decay followed by a long flat tail: fitting only the
        // head must pass while the full fit fails
        let mut trace = synthetic_trace(-3.0, 60);
        for rec in trace.iter_mut().skip(15) {
            rec.f = 16f64.powf(-3.0);
        }
        let mut opts = RateOptions::new(2);
        opts.fstar = Some(0.0);
        opts.window = (1, 15);
        assert_eq!(verify_rate(&trace, &opts).verdict, RateVerdict::Pass);
        let mut opts_full = RateOptions::new(2);
        opts_full.fstar = Some(0.0);
        assert_eq!(verify_rate(&trace, &opts_full).verdict, RateVerdict::Fail);
    }

    #[test]
    fn sigma_violations_are_caught() {
        let mut trace = synthetic_trace(-3.0, 20);
        trace[7].success = false; // next sigma must then be gamma1 * sigma, it is not
        let mut opts = RateOptions::new(2);
        opts.fstar = Some(0.0);
        let report = verify_rate(&trace, &opts);
        assert!(!report.sigma_ok);
        assert!(!report.passed());
    }

    #[test]
    fn tau_decrease_is_caught() {
        let mut trace = synthetic_trace(-3.0, 20);
        trace[12].tau = Some(0.5);
        let mut opts = RateOptions::new(2);
        opts.fstar = Some(0.0);
        assert!(!verify_rate(&trace, &opts).tau_ok);
    }

    #[test]
    fn best_seen_fstar_rule_applies_without_a_reference() {
        // without fstar the best F in the trace minus a margin stands in,
        // which keeps every gap positive
        let trace = synthetic_trace(-3.0, 40);
        let opts = RateOptions::new(2);
        let report = verify_rate(&trace, &opts);
        let best = 40f64.powf(-3.0);
        assert!((report.fstar_used - (best - 1e-14)).abs() <= 1e-20);
        assert!(report.fitted_slope.is_some());
    }

    #[test]
    fn cbound_pointwise_check() {
        let trace = synthetic_trace(-3.0, 40);
        let mut opts = RateOptions::new(2);
        opts.fstar = Some(0.0);
        // gap_j = j^-3 and prod (j+1)(j+2)(j+3) < j^3 * 27 for j >= 1, so
        // C = 27 dominates while C = 1 cannot
        opts.cbound = Some(27.0);
        assert_eq!(verify_rate(&trace, &opts).cbound_ok, Some(true));
        opts.cbound = Some(1.0);
        assert_eq!(verify_rate(&trace, &opts).cbound_ok, Some(false));
    }
}
