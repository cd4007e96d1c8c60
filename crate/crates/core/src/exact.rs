//! Exact stationary quantities of the controlled birth–death chain.
//!
//! With `s` servers, arrival rate `λ = sρ` and unit service rate, the state
//! `k` customers has birth rate `λ` for `k < s` and `λ p_s(k − s)` for
//! `k ≥ s`. Everything follows from the Erlang B value `B_s(ρ)` and the
//! series `F_s(ρ) = Σ_n q_s(n) ρ^{n+1}`.

use serde::{Deserialize, Serialize};

use crate::control::{ControlPolicy, Family, Stability, SystemParams};
use crate::error::{Error, Result};

/// Default absolute tolerance on `F_s`.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Largest number of series terms before giving up.
pub const MAX_TERMS: u64 = 100_000_000;

/// Trailing window over which the largest term ratio is tracked.
const RATIO_WINDOW: usize = 32;

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// The two series defining the performance measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Series {
    /// F_s(ρ) = Σ_{n≥0} q_s(n) ρ^{n+1}.
    pub f: f64,
    /// R_s(ρ) = Σ_{n≥0} (q_s(n−1) − q_s(n)) ρ^n with q_s(−1) = 1, which
    /// equals 1 + (1 − 1/ρ) F_s without the cancellation.
    pub r: f64,
    /// Upper bound on the neglected tail of F_s.
    pub tail_bound: f64,
    /// Number of terms summed.
    pub terms: u64,
}

fn require_stable(policy: &ControlPolicy, params: &SystemParams) -> Result<()> {
    let st = is_stable(policy, params);
    if st.stable {
        Ok(())
    } else {
        Err(Error::Unstable(st.diagnostic))
    }
}

/// Sums F_s and R_s, stopping once the geometric bound
/// `t_n ρ̄/(1 − ρ̄)` on the remaining terms of F_s falls below `tol`, with
/// `ρ̄` the largest term ratio over a trailing window. The bound is
/// rigorous whenever the ratios `p_s(n)ρ` are non-increasing, which holds
/// for every built-in family.
pub fn series(policy: &ControlPolicy, params: &SystemParams, tol: f64) -> Result<Series> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    require_stable(policy, params)?;
    let rho = params.rho();
    if let Some(Family::ErlangB) = policy.family() {
        return Ok(Series { f: 0.0, r: 1.0, tail_bound: 0.0, terms: 0 });
    }
    if rho == 0.0 {
        let r = 1.0 - policy.admit_prob(params.s(), 0);
        return Ok(Series { f: 0.0, r, tail_bound: 0.0, terms: 0 });
    }
    let ln_rho = params.ln_rho();
    let mut f = CompensatedSum::default();
    let mut r = CompensatedSum::default();
    let mut window = [0.0f64; RATIO_WINDOW];
    let mut lq_prev = 0.0;
    let mut t_prev = 0.0;
    // Terms are formed as exp(ln q_s(n) + (n+1) ln ρ): for ρ > 1 the factors
    // q_s(n) and ρ^{n+1} underflow and overflow long before their product
    // becomes negligible.
    for (n, lq) in policy.ln_q_iter(params.s()).enumerate() {
        let n = n as u64;
        if n >= MAX_TERMS {
            return Err(Error::NonConvergence(format!("F_s did not reach tolerance {tol} within {MAX_TERMS} terms")));
        }
        let lpow = n as f64 * ln_rho;
        if lq_prev > f64::NEG_INFINITY {
            // (q_{n−1} − q_n)ρ^n without cancellation
            r.add(-(lq_prev + lpow).exp() * (lq - lq_prev).exp_m1());
        }
        let t = (lq + lpow + ln_rho).exp();
        f.add(t);
        if t == 0.0 {
            // q_s is non-increasing, so every later term vanishes too
            return Ok(Series { f: f.value(), r: r.value(), tail_bound: 0.0, terms: n + 1 });
        }
        if n > 0 {
            window[n as usize % RATIO_WINDOW] = t / t_prev;
        }
        t_prev = t;
        lq_prev = lq;
        if n as usize >= RATIO_WINDOW {
            let bar = window.iter().cloned().fold(0.0, f64::max);
            if bar < 1.0 {
                let tail = t * bar / (1.0 - bar);
                if tail < tol {
                    return Ok(Series { f: f.value(), r: r.value(), tail_bound: tail, terms: n + 1 });
                }
            }
        }
    }
    unreachable!("q_iter is infinite")
}

/// F_s(ρ) with absolute error at most `tol`.
pub fn f_series(policy: &ControlPolicy, params: &SystemParams, tol: f64) -> Result<f64> {
    Ok(series(policy, params, tol)?.f)
}

/// Erlang B blocking probability, by the recurrence
/// `1/B_k = 1 + (k/(sρ)) / B_{k−1}`.
pub fn erlang_b(params: &SystemParams) -> f64 {
    let load = params.lambda();
    if load == 0.0 {
        return 0.0;
    }
    let mut inv = 1.0;
    for k in 1..=params.s() {
        inv = 1.0 + k as f64 / load * inv;
    }
    1.0 / inv
}

/// Erlang C delay probability `C = B/(1 − ρ(1 − B))`.
pub fn erlang_c(params: &SystemParams) -> Result<f64> {
    let rho = params.rho();
    if !(rho < 1.0) {
        return Err(Error::Domain(format!("Erlang C needs ρ < 1, got {rho}")));
    }
    let b = erlang_b(params);
    Ok(b / (1.0 - rho * (1.0 - b)))
}

/// H_a(x, y) = (1 + a x)/(1/y + x).
pub fn h_a(a: f64, x: f64, y: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    (1.0 + a * x) / (1.0 / y + x)
}

/// Probability that an arriving customer finds all servers busy,
/// `D_s = (1 + F_s)/(1/B_s + F_s)`.
pub fn delay_prob(policy: &ControlPolicy, params: &SystemParams, tol: f64) -> Result<f64> {
    let f = f_series(policy, params, tol)?;
    Ok(h_a(1.0, f, erlang_b(params)))
}

/// Probability that an arriving customer is refused,
/// `D_s^R = (1 + (1 − 1/ρ)F_s)/(1/B_s + F_s)`.
pub fn reject_prob(policy: &ControlPolicy, params: &SystemParams, tol: f64) -> Result<f64> {
    if params.rho() == 0.0 {
        return Err(Error::Domain("rejection probability needs ρ > 0".into()));
    }
    let ser = series(policy, params, tol)?;
    let b = erlang_b(params);
    Ok(ser.r / (1.0 / b + ser.f))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfMeasures {
    pub delay: f64,
    pub reject: f64,
    pub f_series: f64,
    pub erlang_b: f64,
}

pub fn perf_measures(policy: &ControlPolicy, params: &SystemParams, tol: f64) -> Result<PerfMeasures> {
    let ser = series(policy, params, tol)?;
    let b = erlang_b(params);
    let reject = if params.rho() > 0.0 { ser.r / (1.0 / b + ser.f) } else { 0.0 };
    Ok(PerfMeasures { delay: h_a(1.0, ser.f, b), reject, f_series: ser.f, erlang_b: b })
}

/// Stationary probabilities π_0, …, π_K of the number in system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDistribution {
    pub probs: Vec<f64>,
    /// Upper bound on the probability mass beyond π_K.
    pub tail_mass_bound: f64,
    pub params: SystemParams,
}

impl StationaryDistribution {
    /// P(all servers busy) = Σ_{k ≥ s} π_k.
    pub fn busy_mass(&self) -> f64 {
        let mut acc = CompensatedSum::default();
        for &p in &self.probs[self.params.s() as usize..] {
            acc.add(p);
        }
        acc.value()
    }

    pub fn total_mass(&self) -> f64 {
        let mut acc = CompensatedSum::default();
        for &p in &self.probs {
            acc.add(p);
        }
        acc.value()
    }
}

/// Stationary distribution by the balance-equation ratios
/// `π_{k−1} = π_k k/(sρ)` below s and `π_{s+n+1} = π_s q_s(n) ρ^{n+1}` above,
/// anchored at `π_s = 1/(1/B_s + F_s)`. Every intermediate is a probability,
/// so nothing overflows even for very large s.
pub fn stationary_dist(policy: &ControlPolicy, params: &SystemParams, tol: f64) -> Result<StationaryDistribution> {
    let s = params.s() as usize;
    let ser = series(policy, params, tol)?;
    let b = erlang_b(params);
    let rho = params.rho();
    let mut probs = vec![0.0; s + 1 + ser.terms as usize];
    if rho == 0.0 {
        probs[0] = 1.0;
        return Ok(StationaryDistribution { probs, tail_mass_bound: 0.0, params: *params });
    }
    let pi_s = 1.0 / (1.0 / b + ser.f);
    probs[s] = pi_s;
    let load = params.lambda();
    for k in (1..=s).rev() {
        probs[k - 1] = probs[k] * k as f64 / load;
    }
    let ln_rho = params.ln_rho();
    for (n, lq) in policy.ln_q_iter(params.s()).take(ser.terms as usize).enumerate() {
        probs[s + n + 1] = pi_s * (lq + (n + 1) as f64 * ln_rho).exp();
    }
    Ok(StationaryDistribution { probs, tail_mass_bound: pi_s * ser.tail_bound, params: *params })
}

/// Stability verdict: ρ below `1/P_s`.
pub fn is_stable(policy: &ControlPolicy, params: &SystemParams) -> Stability {
    policy.stability(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::Family;

    fn params_rho(s: u64, rho: f64) -> SystemParams {
        SystemParams::from_rho(s, rho).unwrap()
    }

    #[test]
    fn f_series_examples() {
        let c = ControlPolicy::erlang_c();
        assert!((f_series(&c, &params_rho(7, 0.5), 1e-14).unwrap() - 1.0).abs() < 1e-13);
        assert_eq!(f_series(&ControlPolicy::erlang_b(), &params_rho(7, 0.5), 1e-14).unwrap(), 0.0);
        let d = ControlPolicy::local(Family::ModifiedDrift { p: 0.5 }).unwrap();
        let prm = SystemParams::from_gamma(100, 0.1).unwrap();
        let f = f_series(&d, &prm, 1e-13).unwrap();
        // geometric series with ratio ρ/(1 − ln p/√s)
        let ratio = 0.99 / (1.0 - 0.5f64.ln() / 10.0);
        assert!((f - ratio / (1.0 - ratio)).abs() < 1e-10, "{f}");
        assert!((f - 12.48187).abs() < 1e-4);
    }

    #[test]
    fn f_series_unstable() {
        let c = ControlPolicy::erlang_c();
        assert!(matches!(f_series(&c, &params_rho(4, 1.0), 1e-12), Err(Error::Unstable(_))));
    }

    #[test]
    fn erlang_b_examples() {
        assert!((erlang_b(&params_rho(1, 1.0)) - 0.5).abs() < 1e-16);
        assert!((erlang_b(&params_rho(2, 1.0)) - 0.4).abs() < 1e-16);
        assert_eq!(erlang_b(&params_rho(3, 0.0)), 0.0);
    }

    #[test]
    fn erlang_c_examples() {
        assert!((erlang_c(&params_rho(1, 0.3)).unwrap() - 0.3).abs() < 1e-16);
        assert!((erlang_c(&params_rho(2, 0.5)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let p = params_rho(10, 0.9);
        assert!(erlang_c(&p).unwrap() >= erlang_b(&p));
        assert!(erlang_c(&params_rho(3, 1.0)).is_err());
    }

    #[test]
    fn extreme_policies() {
        let p = params_rho(10, 0.9);
        let b = erlang_b(&p);
        let eb = ControlPolicy::erlang_b();
        assert!((delay_prob(&eb, &p, 1e-12).unwrap() - b).abs() < 1e-15);
        assert!((reject_prob(&eb, &p, 1e-12).unwrap() - b).abs() < 1e-15);
        let ec = ControlPolicy::erlang_c();
        assert!((delay_prob(&ec, &p, 1e-14).unwrap() - erlang_c(&p).unwrap()).abs() < 1e-13);
        assert_eq!(reject_prob(&ec, &p, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn reject_matches_stationary_sum() {
        let pol = ControlPolicy::local(Family::ModifiedDrift { p: 0.5 }).unwrap();
        let prm = SystemParams::from_gamma(100, 0.1).unwrap();
        let dist = stationary_dist(&pol, &prm, 1e-14).unwrap();
        let mut oracle = 0.0;
        for (k, pi) in dist.probs.iter().enumerate().skip(100) {
            oracle += pi * (1.0 - pol.admit_prob(100, k as u64 - 100));
        }
        let r = reject_prob(&pol, &prm, 1e-14).unwrap();
        assert!((r - oracle).abs() < 1e-12, "{r} vs {oracle}");
    }

    #[test]
    fn stationary_examples() {
        let d = stationary_dist(&ControlPolicy::erlang_c(), &params_rho(1, 0.5), 1e-15).unwrap();
        for (k, p) in d.probs.iter().enumerate().take(30) {
            assert!((p - 0.5f64.powi(k as i32 + 1)).abs() < 1e-15);
        }
        let ea = ControlPolicy::local(Family::ErlangA { theta: 1.0 }).unwrap();
        let prm = SystemParams::from_gamma(10, 0.1).unwrap();
        let tol = 1e-13;
        let d = stationary_dist(&ea, &prm, tol).unwrap();
        assert!((d.busy_mass() - delay_prob(&ea, &prm, tol).unwrap()).abs() < 2.0 * tol);
        assert!((d.total_mass() - 1.0).abs() < 2.0 * tol);
        let b = stationary_dist(&ControlPolicy::erlang_b(), &params_rho(2, 1.0), tol).unwrap();
        // weights (sρ)^k/k! = 1, 2, 2
        assert!((b.probs[2] - 0.4).abs() < 1e-15);
        assert_eq!(b.probs.len(), 3);
    }

    #[test]
    fn tail_bound_is_honest() {
        // F_s for Erlang C is ρ/(1 − ρ); the reported tail bound must cover
        // the truncation error.
        let p = params_rho(16, 0.97);
        let ser = series(&ControlPolicy::erlang_c(), &p, 1e-6).unwrap();
        let truth = 0.97 / 0.03;
        assert!(truth - ser.f <= ser.tail_bound + 1e-12);
        assert!(truth - ser.f < 1e-6);
    }

    #[test]
    fn stability_examples() {
        let c = ControlPolicy::erlang_c();
        assert!(is_stable(&c, &SystemParams::from_gamma(100, 0.1).unwrap()).stable);
        let loc = ControlPolicy::local(Family::ModifiedDrift { p: (-1.0f64).exp() }).unwrap();
        assert!(is_stable(&loc, &SystemParams::from_gamma(100, -0.05).unwrap()).stable);
        // a local drift control stays finite above ρ = 1
        assert!(f_series(&loc, &SystemParams::from_gamma(100, -0.05).unwrap(), 1e-12).unwrap().is_finite());
    }
}
