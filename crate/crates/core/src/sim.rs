//! Monte Carlo simulation of the controlled birth–death chain.
//!
//! Each replication runs on its own ChaCha8 stream derived from the seed,
//! so results are bit-identical for a given configuration regardless of
//! how replications are scheduled. Time averages use the expected sojourn
//! `1/R_k` of every visit to state `k` (conditional Monte Carlo) rather than
//! a sampled exponential, which removes holding-time noise without changing
//! the expectation; [`scaled_path`] samples real holding times.

use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::control::{ControlPolicy, SystemParams};
use crate::diffusion::DiffusionSpec;
use crate::error::{Error, Result};

/// Number of batches used for the confidence interval of a single
/// replication.
pub const BATCHES: usize = 10;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub params: SystemParams,
    pub policy: ControlPolicy,
    pub horizon: f64,
    pub warmup: f64,
    pub replications: usize,
    pub seed: u64,
}

impl SimConfig {
    /// Configuration with the default warmup of `10·s` time units.
    pub fn new(params: SystemParams, policy: ControlPolicy, horizon: f64, replications: usize, seed: u64) -> Self {
        let warmup = 10.0 * params.s() as f64;
        SimConfig { params, policy, horizon, warmup, replications, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > self.warmup && self.warmup >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::Domain(format!(
                "need horizon > warmup ≥ 0, got horizon={}, warmup={}",
                self.horizon, self.warmup
            )));
        }
        if self.replications == 0 {
            return Err(Error::Domain("at least one replication is required".into()));
        }
        Ok(())
    }

    fn rng(&self, rep: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(rep as u64);
        rng
    }
}

/// Point estimate with a 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub point: f64,
    pub half_width_95: f64,
    pub replications_used: usize,
}

impl SimEstimate {
    /// Student-t interval over independent sample means.
    pub fn from_samples(samples: &[f64], replications_used: usize) -> Self {
        let n = samples.len() as f64;
        let point = samples.iter().sum::<f64>() / n;
        let half_width_95 = if samples.len() < 2 {
            f64::INFINITY
        } else {
            let var = samples.iter().map(|x| (x - point).powi(2)).sum::<f64>() / (n - 1.0);
            let t = StudentsT::new(0.0, 1.0, n - 1.0).expect("positive dof").inverse_cdf(0.975);
            t * (var / n).sqrt()
        };
        SimEstimate { point, half_width_95, replications_used }
    }

    pub fn covers(&self, value: f64) -> bool {
        (self.point - value).abs() <= self.half_width_95
    }
}

/// Per-state transition counts of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StateCounts {
    /// Admitted arrivals (k → k+1).
    pub ups: Vec<u64>,
    /// Departures (k → k−1).
    pub downs: Vec<u64>,
    /// Refused arrivals (k → k).
    pub refused: Vec<u64>,
}

impl StateCounts {
    fn ensure(&mut self, k: usize) {
        if k >= self.ups.len() {
            let len = (k + 1).max(2 * self.ups.len());
            self.ups.resize(len, 0);
            self.downs.resize(len, 0);
            self.refused.resize(len, 0);
        }
    }

    fn merge(&mut self, other: &StateCounts) {
        self.ensure(other.ups.len().saturating_sub(1));
        for k in 0..other.ups.len() {
            self.ups[k] += other.ups[k];
            self.downs[k] += other.downs[k];
            self.refused[k] += other.refused[k];
        }
    }

    fn visits(&self, k: usize) -> u64 {
        self.ups[k] + self.downs[k] + self.refused[k]
    }

    /// Arrivals, delayed arrivals (finding ≥ s present) and refusals.
    fn tallies(&self, s: usize) -> (u64, u64, u64) {
        let mut arrivals = 0;
        let mut delayed = 0;
        let mut refused = 0;
        for k in 0..self.ups.len() {
            let a = self.ups[k] + self.refused[k];
            arrivals += a;
            if k >= s {
                delayed += a;
            }
            refused += self.refused[k];
        }
        (arrivals, delayed, refused)
    }
}

/// Rate tables per state, extended on demand.
struct Rates<'a> {
    policy: &'a ControlPolicy,
    s: u64,
    lambda: f64,
    /// λ p / R, λ / R and 1/R for each state.
    admit: Vec<f64>,
    arrive: Vec<f64>,
    inv_rate: Vec<f64>,
}

impl<'a> Rates<'a> {
    fn new(policy: &'a ControlPolicy, params: &SystemParams) -> Self {
        let mut r = Rates {
            policy,
            s: params.s(),
            lambda: params.lambda(),
            admit: Vec::new(),
            arrive: Vec::new(),
            inv_rate: Vec::new(),
        };
        r.extend(2 * params.s() as usize + 64);
        r
    }

    fn extend(&mut self, len: usize) {
        for k in self.admit.len()..len {
            let busy = (k as u64).min(self.s) as f64;
            let p = if (k as u64) < self.s { 1.0 } else { self.policy.admit_prob(self.s, k as u64 - self.s) };
            let total = self.lambda + busy;
            self.admit.push(self.lambda * p / total);
            self.arrive.push(self.lambda / total);
            self.inv_rate.push(1.0 / total);
        }
    }

    #[inline]
    fn ensure(&mut self, k: usize) {
        if k >= self.admit.len() {
            self.extend(2 * k + 1);
        }
    }
}

#[inline]
fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// One replication: returns counts for each of the `batches` equal time
/// segments after the warmup.
fn run_replication(config: &SimConfig, rep: usize, batches: usize) -> Vec<StateCounts> {
    let mut rng = config.rng(rep);
    let mut rates = Rates::new(&config.policy, &config.params);
    let mut k = config.params.s() as usize;
    let mut clock = 0.0;
    // warmup: no bookkeeping
    while clock < config.warmup {
        rates.ensure(k + 1);
        clock += rates.inv_rate[k];
        let u = unit(&mut rng);
        if u < rates.arrive[k] {
            if u < rates.admit[k] {
                k += 1;
            }
        } else {
            k -= 1;
        }
    }
    let span = (config.horizon - config.warmup) / batches as f64;
    let mut out = Vec::with_capacity(batches);
    for b in 0..batches {
        let end = config.warmup + span * (b + 1) as f64;
        let mut counts = StateCounts::default();
        counts.ensure(rates.admit.len());
        while clock < end {
            rates.ensure(k + 1);
            counts.ensure(k + 1);
            clock += rates.inv_rate[k];
            let u = unit(&mut rng);
            // One uniform decides the event; given an arrival it is
            // uniform on [0, λ/R), so the comparison with λp/R is the
            // admission coin of that customer.
            if u < rates.arrive[k] {
                if u < rates.admit[k] {
                    counts.ups[k] += 1;
                    k += 1;
                } else {
                    counts.refused[k] += 1;
                }
            } else {
                counts.downs[k] += 1;
                k -= 1;
            }
        }
        out.push(counts);
    }
    out
}

/// Output of [`simulate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub delay: SimEstimate,
    pub reject: SimEstimate,
    /// Time-average distribution of the number in system.
    pub hist: Vec<f64>,
    pub counts: StateCounts,
    pub seed: u64,
    pub params: SystemParams,
}

impl SimResult {
    /// Empirical infinitesimal drift of `X_s = (Q_s − s)/√s` in state k:
    /// net upward jumps per unit time divided by √s, with its standard
    /// error.
    pub fn empirical_drift(&self, k: usize) -> Option<(f64, f64)> {
        if k >= self.counts.ups.len() || self.counts.visits(k) == 0 {
            return None;
        }
        let s = self.params.s();
        let total = self.params.lambda() + (k as u64).min(s) as f64;
        let time = self.counts.visits(k) as f64 / total;
        let up = self.counts.ups[k] as f64;
        let down = self.counts.downs[k] as f64;
        let root = self.params.sqrt_s();
        Some(((up - down) / (root * time), (up + down).sqrt() / (root * time)))
    }

    /// Kolmogorov–Smirnov distance between the time-average distribution
    /// of `X_s` and the diffusion's stationary law, with state k mapped to
    /// the cell edge `(k + ½ − s)/√s`.
    pub fn ks_to_diffusion(&self, spec: &DiffusionSpec) -> Result<f64> {
        let s = self.params.s() as f64;
        let root = self.params.sqrt_s();
        let mut cum = 0.0;
        let mut worst: f64 = 0.0;
        for (k, p) in self.hist.iter().enumerate() {
            cum += p;
            let x = (k as f64 + 0.5 - s) / root;
            worst = worst.max((cum - spec.cdf(x)?).abs());
        }
        Ok(worst)
    }

    /// Total-variation distance to a reference distribution.
    pub fn total_variation(&self, probs: &[f64]) -> f64 {
        let n = self.hist.len().max(probs.len());
        0.5 * (0..n).map(|k| (self.hist.get(k).unwrap_or(&0.0) - probs.get(k).unwrap_or(&0.0)).abs()).sum::<f64>()
    }

    /// `k,prob` rows with header.
    pub fn write_hist_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Domain(format!("CSV output failed: {e}"));
        w.write_record(["k", "prob"]).map_err(io)?;
        for (k, p) in self.hist.iter().enumerate() {
            w.write_record([k.to_string(), p.to_string()]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Domain(format!("CSV output failed: {e}")))
    }
}

/// Drift of `X_s` at x implied by the rate model: `−γp + (p − 1)√s` with
/// `p = p_s(⌊s + √s x⌋ − s)` above zero and `−γ + (s − ⌊s + √s x⌋)/√s`
/// below.
pub fn model_drift(policy: &ControlPolicy, params: &SystemParams, x: f64) -> f64 {
    let s = params.s() as f64;
    let root = params.sqrt_s();
    let k = (s + root * x).floor();
    if x >= 0.0 {
        let p = policy.admit_prob(params.s(), (k - s) as u64);
        -params.gamma() * p + (p - 1.0) * root
    } else {
        -params.gamma() + (s - k) / root
    }
}

/// Simulates `replications` independent runs. Unstable configurations are
/// simulated as requested (the queue simply grows).
pub fn simulate(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let reps = config.replications;
    let per_rep = if reps == 1 { BATCHES } else { 1 };
    let runs: Vec<Vec<StateCounts>> =
        (0..reps).into_par_iter().map(|rep| run_replication(config, rep, per_rep)).collect();
    let s = config.params.s() as usize;
    let mut delays = Vec::new();
    let mut rejects = Vec::new();
    let mut total = StateCounts::default();
    for batches in &runs {
        for b in batches {
            let (arr, del, refd) = b.tallies(s);
            let arr = arr.max(1) as f64;
            delays.push(del as f64 / arr);
            rejects.push(refd as f64 / arr);
            total.merge(b);
        }
    }
    let rates = {
        let mut r = Rates::new(&config.policy, &config.params);
        r.ensure(total.ups.len());
        r
    };
    let mut hist: Vec<f64> = (0..total.ups.len()).map(|k| total.visits(k) as f64 * rates.inv_rate[k]).collect();
    let mass: f64 = hist.iter().sum();
    hist.iter_mut().for_each(|h| *h /= mass);
    while hist.len() > 1 && *hist.last().expect("non-empty") == 0.0 {
        hist.pop();
    }
    Ok(SimResult {
        delay: SimEstimate::from_samples(&delays, reps),
        reject: SimEstimate::from_samples(&rejects, reps),
        hist,
        counts: total,
        seed: config.seed,
        params: config.params,
    })
}

/// Normalised path `X_s(t) = (Q_s(t) − s)/√s` of the first replication,
/// with exponential holding times, sampled at `0, dt, 2dt, …, horizon`.
pub fn scaled_path(config: &SimConfig, sample_dt: f64) -> Result<Vec<(f64, f64)>> {
    config.validate()?;
    if !(sample_dt > 0.0) {
        return Err(Error::Domain(format!("sample step must be positive, got {sample_dt}")));
    }
    let mut rng = config.rng(0);
    let mut rates = Rates::new(&config.policy, &config.params);
    let s = config.params.s() as usize;
    let root = config.params.sqrt_s();
    let exp = Exp::new(1.0).expect("unit rate");
    let samples = (config.horizon / sample_dt).floor() as usize + 1;
    let mut path = Vec::with_capacity(samples);
    let mut k = s;
    let mut next_event = 0.0;
    let mut jump_pending = false;
    for i in 0..samples {
        let t = i as f64 * sample_dt;
        while next_event <= t {
            if jump_pending {
                let u: f64 = rng.random();
                if u < rates.arrive[k] {
                    if u < rates.admit[k] {
                        k += 1;
                    }
                } else {
                    k -= 1;
                }
            }
            rates.ensure(k + 1);
            let hold: f64 = exp.sample(&mut rng);
            next_event += hold * rates.inv_rate[k];
            jump_pending = true;
        }
        path.push((t, (k as f64 - s as f64) / root));
    }
    Ok(path)
}

/// `t,x` rows with header.
pub fn write_path_csv<W: Write>(path: &[(f64, f64)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Domain(format!("CSV output failed: {e}"));
    w.write_record(["t", "x"]).map_err(io)?;
    for (t, x) in path {
        w.write_record([t.to_string(), x.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Domain(format!("CSV output failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::Family;
    use crate::exact::{erlang_b, erlang_c};

    #[test]
    fn erlang_c_delay() {
        let params = SystemParams::from_gamma(10, 0.5).unwrap();
        let cfg = SimConfig::new(params, ControlPolicy::erlang_c(), 1e5, 5, 7);
        let r = simulate(&cfg).unwrap();
        let want = erlang_c(&params).unwrap();
        assert!((r.delay.point - want).abs() <= 3.0 * r.delay.half_width_95, "{:?} vs {want}", r.delay);
        assert_eq!(r.reject.point, 0.0);
    }

    #[test]
    fn erlang_b_reject() {
        let params = SystemParams::from_gamma(5, 0.0).unwrap();
        let cfg = SimConfig::new(params, ControlPolicy::erlang_b(), 1e5, 1, 11);
        let r = simulate(&cfg).unwrap();
        let want = erlang_b(&params);
        assert!((r.reject.point - want).abs() <= 3.0 * r.reject.half_width_95, "{:?} vs {want}", r.reject);
        assert_eq!(r.reject.replications_used, 1);
    }

    #[test]
    fn reproducible() {
        let params = SystemParams::from_gamma(20, 0.2).unwrap();
        let pol = ControlPolicy::local(Family::ErlangA { theta: 1.0 }).unwrap();
        let cfg = SimConfig::new(params, pol, 2e4, 3, 42);
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
        let other = SimConfig { seed: 43, ..cfg.clone() };
        assert_ne!(simulate(&cfg).unwrap().delay, simulate(&other).unwrap().delay);
        assert_eq!(scaled_path(&cfg, 0.5).unwrap(), scaled_path(&cfg, 0.5).unwrap());
    }

    #[test]
    fn path_starts_at_zero() {
        let params = SystemParams::from_gamma(25, 0.1).unwrap();
        let cfg = SimConfig { warmup: 0.0, ..SimConfig::new(params, ControlPolicy::erlang_c(), 10.0, 1, 1) };
        let path = scaled_path(&cfg, 0.1).unwrap();
        assert_eq!(path[0], (0.0, 0.0));
        assert_eq!(path.len(), 101);
    }

    #[test]
    fn config_validation() {
        let params = SystemParams::from_gamma(4, 0.1).unwrap();
        let bad = SimConfig { warmup: 5.0, ..SimConfig::new(params, ControlPolicy::erlang_c(), 5.0, 1, 0) };
        assert!(simulate(&bad).is_err());
        let none = SimConfig { replications: 0, warmup: 0.0, ..bad.clone() };
        assert!(simulate(&none).is_err());
    }

    #[test]
    fn csv_headers() {
        let mut buf = Vec::new();
        write_path_csv(&[(0.0, 0.0), (0.5, -0.25)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,x\n0,0\n0.5,-0.25\n");
    }

    #[test]
    fn model_drift_examples() {
        let params = SystemParams::from_gamma(400, 0.1).unwrap();
        let pol = ControlPolicy::local(Family::ErlangA { theta: 1.0 }).unwrap();
        assert!((model_drift(&pol, &params, -1.0) - (-0.1 + 1.0)).abs() < 1e-12);
        let p = pol.admit_prob(400, 20);
        assert!((model_drift(&pol, &params, 1.0) - (-0.1 * p + (p - 1.0) * 20.0)).abs() < 1e-12);
    }
}
