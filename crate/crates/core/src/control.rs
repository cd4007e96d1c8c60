//! Admission-control policies.
//!
//! A policy is either *scaled* (built from a profile family and applied in
//! local or global form) or *tabulated* (explicit per-state admission
//! probabilities). Local control admits a customer that finds `k` others
//! waiting with probability `1/(1 + a((k+1)/√s)/√s)`; global control fixes the
//! cumulative products `q_s(n) = f((n+1)/√s)` through the scaling profile `f`.
//! The two are linked by `f(x) = exp(−∫₀ˣ a)` and `a = −f'/f`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_to_inf, QuadOptions};
use crate::specfun::mills_ratio;

pub type Func = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Grid used to spot-check monotonicity of user-supplied functions.
const CHECK_GRID: usize = 200;
const CHECK_SPAN: f64 = 20.0;

/// Far point used to estimate `lim a(x)` for custom local controls.
pub const GAMMA_MIN_PROBE: f64 = 1e6;

/// Number of servers and QED slack, with the derived load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    s: u64,
    gamma: f64,
    rho: f64,
}

impl SystemParams {
    /// Parameters from the slack γ, with `ρ = 1 − γ/√s`.
    pub fn from_gamma(s: u64, gamma: f64) -> Result<Self> {
        if s == 0 {
            return Err(Error::Domain("number of servers must be positive".into()));
        }
        let root = (s as f64).sqrt();
        if !gamma.is_finite() || gamma > root {
            return Err(Error::Domain(format!("need γ ≤ √s = {root}, got γ = {gamma}")));
        }
        Ok(SystemParams { s, gamma, rho: (1.0 - gamma / root).max(0.0) })
    }

    /// Parameters from the load ρ, with `γ = √s (1 − ρ)`.
    pub fn from_rho(s: u64, rho: f64) -> Result<Self> {
        if s == 0 {
            return Err(Error::Domain("number of servers must be positive".into()));
        }
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::Domain(format!("need finite ρ ≥ 0, got {rho}")));
        }
        Ok(SystemParams { s, gamma: (s as f64).sqrt() * (1.0 - rho), rho })
    }

    pub fn s(&self) -> u64 {
        self.s
    }

    pub fn sqrt_s(&self) -> f64 {
        (self.s as f64).sqrt()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Arrival rate λ = sρ (mean service time 1).
    pub fn lambda(&self) -> f64 {
        self.s as f64 * self.rho
    }

    /// ln ρ, computed as ln(1 − γ/√s) so that it stays accurate when ρ is
    /// within a few ulps of 1.
    pub fn ln_rho(&self) -> f64 {
        libm::log1p(-self.gamma / self.sqrt_s())
    }

    /// γ_s = −√s ln ρ; `None` when ρ = 0.
    pub fn gamma_s(&self) -> Option<f64> {
        (self.rho > 0.0).then(|| -self.sqrt_s() * self.ln_rho())
    }
}

/// Closed-form profile families plus user-supplied custom controls.
#[derive(Clone)]
pub enum Family {
    /// a ≡ 0, f ≡ 1: every customer admitted.
    ErlangC,
    /// No customer admitted once all servers are busy.
    ErlangB,
    /// a ≡ −ln p, f(x) = p^x.
    ModifiedDrift { p: f64 },
    /// a(x) = θx, f(x) = exp(−θx²/2).
    ErlangA { theta: f64 },
    /// a(x) = θx^α, f(x) = exp(−θx^{α+1}/(α+1)).
    Power { theta: f64, alpha: f64 },
    /// f(x) = 1[x < η]: admit while fewer than η√s − 1 customers wait.
    ScaledBuffer { eta: f64 },
    /// User-supplied local control function a.
    CustomLocal(Func),
    /// User-supplied scaling profile f.
    CustomGlobal(Func),
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::ErlangC => write!(f, "ErlangC"),
            Family::ErlangB => write!(f, "ErlangB"),
            Family::ModifiedDrift { p } => write!(f, "ModifiedDrift(p={p})"),
            Family::ErlangA { theta } => write!(f, "ErlangA(θ={theta})"),
            Family::Power { theta, alpha } => write!(f, "Power(θ={theta}, α={alpha})"),
            Family::ScaledBuffer { eta } => write!(f, "ScaledBuffer(η={eta})"),
            Family::CustomLocal(_) => write!(f, "CustomLocal"),
            Family::CustomGlobal(_) => write!(f, "CustomGlobal"),
        }
    }
}

/// Value of γ_min together with whether it is only an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaMin {
    pub value: f64,
    pub approximate: bool,
}

impl GammaMin {
    fn exact(value: f64) -> Self {
        GammaMin { value, approximate: false }
    }
}

impl Family {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Domain(msg));
        match *self {
            Family::ModifiedDrift { p } if !(p > 0.0 && p < 1.0) => bad(format!("drift needs p in (0,1), got {p}")),
            Family::ErlangA { theta } if !(theta > 0.0 && theta.is_finite()) => {
                bad(format!("Erlang A needs θ > 0, got {theta}"))
            }
            Family::Power { theta, alpha } if !(theta > 0.0 && alpha >= 0.0 && alpha.is_finite()) => {
                bad(format!("power control needs θ > 0 and α ≥ 0, got θ={theta}, α={alpha}"))
            }
            Family::ScaledBuffer { eta } if !(eta > 0.0 && eta.is_finite()) => {
                bad(format!("scaled buffer needs η > 0, got {eta}"))
            }
            Family::CustomLocal(ref a) => {
                let mut prev = a(0.0);
                if !(prev >= 0.0) {
                    return bad(format!("a(0) = {prev} is negative"));
                }
                for i in 1..=CHECK_GRID {
                    let x = CHECK_SPAN * i as f64 / CHECK_GRID as f64;
                    let v = a(x);
                    if !(v >= prev) {
                        return bad(format!("a is not non-decreasing near x = {x}"));
                    }
                    prev = v;
                }
                Ok(())
            }
            Family::CustomGlobal(ref f) => {
                if (f(0.0) - 1.0).abs() > 1e-12 {
                    return bad(format!("scaling profile needs f(0) = 1, got {}", f(0.0)));
                }
                let mut prev = 1.0;
                for i in 1..=CHECK_GRID {
                    let x = CHECK_SPAN * i as f64 / CHECK_GRID as f64;
                    let v = f(x);
                    if !(v >= 0.0 && v <= prev) {
                        return bad(format!("f is not non-negative and non-increasing near x = {x}"));
                    }
                    prev = v;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Scaling profile f(x) for x ≥ 0.
    pub fn profile(&self, x: f64) -> f64 {
        match self {
            Family::ErlangC => 1.0,
            Family::ErlangB => {
                if x <= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Family::ModifiedDrift { p } => p.powf(x),
            Family::ErlangA { theta } => (-0.5 * theta * x * x).exp(),
            Family::Power { theta, alpha } => (-theta * x.powf(alpha + 1.0) / (alpha + 1.0)).exp(),
            Family::ScaledBuffer { eta } => {
                if x < *eta {
                    1.0
                } else {
                    0.0
                }
            }
            Family::CustomLocal(a) => local_to_global(a.clone())(x),
            Family::CustomGlobal(f) => f(x),
        }
    }

    /// Local control function a(x); `+∞` where admission is shut off.
    pub fn rate(&self, x: f64) -> Result<f64> {
        Ok(match self {
            Family::ErlangC => 0.0,
            Family::ErlangB => f64::INFINITY,
            Family::ModifiedDrift { p } => -p.ln(),
            Family::ErlangA { theta } => theta * x,
            Family::Power { theta, alpha } => {
                if *alpha == 0.0 {
                    *theta
                } else {
                    theta * x.powf(*alpha)
                }
            }
            Family::ScaledBuffer { eta } => {
                if x < *eta {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Family::CustomLocal(a) => a(x),
            Family::CustomGlobal(f) => return global_to_local(f.clone())(x),
        })
    }

    /// Analytic derivatives f, f', …, f'''' at x, where the family is smooth
    /// and has them in closed form.
    pub fn profile_derivs(&self, x: f64) -> Option<[f64; 5]> {
        match *self {
            Family::ErlangC => Some([1.0, 0.0, 0.0, 0.0, 0.0]),
            Family::ModifiedDrift { p } => {
                let c = p.ln();
                let f = p.powf(x);
                Some([f, c * f, c * c * f, c * c * c * f, c * c * c * c * f])
            }
            Family::Power { theta, alpha } if alpha == 0.0 => {
                let f = (-theta * x).exp();
                let c = -theta;
                Some([f, c * f, c * c * f, c * c * c * f, c * c * c * c * f])
            }
            Family::ErlangA { theta } => {
                let f = (-0.5 * theta * x * x).exp();
                let t2 = theta * theta;
                let x2 = x * x;
                Some([
                    f,
                    -theta * x * f,
                    (t2 * x2 - theta) * f,
                    (-t2 * theta * x2 * x + 3.0 * t2 * x) * f,
                    (t2 * t2 * x2 * x2 - 6.0 * t2 * theta * x2 + 3.0 * t2) * f,
                ])
            }
            _ => None,
        }
    }

    /// f'(0) and whether it is a finite-difference estimate.
    pub fn slope_at_zero(&self) -> (f64, bool) {
        match *self {
            Family::ErlangC | Family::ErlangB | Family::ErlangA { .. } | Family::ScaledBuffer { .. } => (0.0, false),
            Family::ModifiedDrift { p } => (p.ln(), false),
            Family::Power { theta, alpha } => (if alpha == 0.0 { -theta } else { 0.0 }, false),
            Family::CustomLocal(_) | Family::CustomGlobal(_) => {
                let h = 1e-7;
                ((self.profile(h) - self.profile(0.0)) / h, true)
            }
        }
    }

    /// True when f ≡ 1 (no control beyond Erlang C).
    pub fn is_unit(&self) -> bool {
        matches!(self, Family::ErlangC)
    }

    /// True when the profile is discontinuous, so the smooth expansions only
    /// hold in an averaged sense.
    pub fn is_average_sense(&self) -> bool {
        matches!(self, Family::ScaledBuffer { .. })
    }

    pub fn gamma_min(&self) -> GammaMin {
        match self {
            Family::ErlangC => GammaMin::exact(0.0),
            Family::ErlangB | Family::ErlangA { .. } | Family::ScaledBuffer { .. } => {
                GammaMin::exact(f64::NEG_INFINITY)
            }
            Family::ModifiedDrift { p } => GammaMin::exact(p.ln()),
            Family::Power { theta, alpha } => GammaMin::exact(if *alpha == 0.0 { -theta } else { f64::NEG_INFINITY }),
            Family::CustomLocal(a) => GammaMin { value: -a(GAMMA_MIN_PROBE), approximate: true },
            Family::CustomGlobal(f) => {
                // Largest probe point where ln f is still representable.
                let mut x = GAMMA_MIN_PROBE;
                while x > 1e-3 && !(f(x) > 1e-290) {
                    x *= 0.5;
                }
                let value = if f(x) > 1e-290 && f(0.5 * x) > 0.0 {
                    (f(x).ln() - f(0.5 * x).ln()) / (0.5 * x)
                } else {
                    f64::NEG_INFINITY
                };
                GammaMin { value, approximate: true }
            }
        }
    }

    /// Closed-form L, L′ or L″ at γ where the family has one.
    fn laplace_closed(&self, gamma: f64, order: u8) -> Option<f64> {
        let pole = |c: f64| -> f64 {
            // derivatives of 1/(γ + c)
            let u = 1.0 / (gamma + c);
            match order {
                0 => u,
                1 => -u * u,
                _ => 2.0 * u * u * u,
            }
        };
        match *self {
            Family::ErlangC => Some(pole(0.0)),
            Family::ErlangB => Some(0.0),
            Family::ModifiedDrift { p } => Some(pole(-p.ln())),
            Family::Power { theta, alpha } if alpha == 0.0 => Some(pole(theta)),
            Family::ErlangA { theta } => {
                let alpha = 0.5 * theta;
                let root = alpha.sqrt();
                let chi = mills_ratio(gamma / (2.0 * root));
                Some(match order {
                    0 => chi / root,
                    1 => gamma * chi / (2.0 * alpha * root) - 1.0 / (2.0 * alpha),
                    _ => {
                        let delta = gamma / (2.0 * root);
                        chi / (2.0 * alpha * root) + gamma * (2.0 * delta * chi - 1.0) / (4.0 * alpha * alpha)
                    }
                })
            }
            Family::ScaledBuffer { eta } => {
                let m = order as i32;
                let sign = if order == 1 { -1.0 } else { 1.0 };
                Some(sign * truncated_moment(m, gamma, eta))
            }
            _ => None,
        }
    }
}

/// ∫₀^η x^m e^{−γx} dx for m ∈ {0, 1, 2}.
fn truncated_moment(m: i32, gamma: f64, eta: f64) -> f64 {
    let z = gamma * eta;
    if z.abs() < 0.5 {
        // Σ_k (−z)^k / (k! (k+m+1)) · η^{m+1}
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 0..40 {
            sum += term / (k as f64 + m as f64 + 1.0);
            term *= -z / (k as f64 + 1.0);
        }
        return sum * eta.powi(m + 1);
    }
    let e = (-z).exp();
    match m {
        0 => -(-z).exp_m1() / gamma,
        1 => (1.0 - (1.0 + z) * e) / (gamma * gamma),
        _ => (2.0 - e * (z * z + 2.0 * z + 2.0)) / (gamma * gamma * gamma),
    }
}

/// Global profile from a local control: f(x) = exp(−∫₀ˣ a(y) dy), by
/// adaptive quadrature of the exponent.
pub fn local_to_global(a: Func) -> impl Fn(f64) -> f64 + Send + Sync {
    move |x: f64| {
        if x <= 0.0 {
            return 1.0;
        }
        let opts = QuadOptions { abs_tol: 1e-15, rel_tol: 1e-13, max_intervals: 2000 };
        let integral = integrate(|y| a(y), 0.0, x, opts).map(|r| r.value).unwrap_or(f64::INFINITY);
        (-integral).exp()
    }
}

/// Local control from a global profile: a(x) = −f′(x)/f(x), by central
/// differences with step max(1e-6, 1e-6·x) (second-order one-sided near 0).
pub fn global_to_local(f: Func) -> impl Fn(f64) -> Result<f64> + Send + Sync {
    move |x: f64| {
        let fx = f(x);
        if !(fx > 0.0) {
            return Err(Error::Domain(format!("f({x}) = {fx} is not positive")));
        }
        let h = (1e-6 * x).max(1e-6);
        let deriv = if x >= h {
            (f(x + h) - f(x - h)) / (2.0 * h)
        } else {
            (-3.0 * fx + 4.0 * f(x + h) - f(x + 2.0 * h)) / (2.0 * h)
        };
        Ok(-deriv / fx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Local,
    Global,
}

/// Stability verdict for a load: ρ must stay below `1/P_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub stable: bool,
    /// Supremum of stable loads, `1/P_s`.
    pub rho_bound: f64,
    /// Whether the bound rests on an estimate (custom γ_min, table lim-sup).
    pub approximate: bool,
    /// Load sits exactly on the bound of a tabulated policy.
    pub indeterminate: bool,
    pub diagnostic: String,
}

#[derive(Clone, Debug)]
pub enum ControlPolicy {
    Scaled {
        family: Family,
        mode: Mode,
    },
    /// Per-state admission probabilities p_s(0), p_s(1), …; states past the
    /// end of the table reuse the last entry.
    Tabulated(Arc<[f64]>),
}

impl ControlPolicy {
    pub fn local(family: Family) -> Result<Self> {
        family.validate()?;
        Ok(ControlPolicy::Scaled { family, mode: Mode::Local })
    }

    pub fn global(family: Family) -> Result<Self> {
        family.validate()?;
        Ok(ControlPolicy::Scaled { family, mode: Mode::Global })
    }

    pub fn erlang_b() -> Self {
        ControlPolicy::Scaled { family: Family::ErlangB, mode: Mode::Local }
    }

    pub fn erlang_c() -> Self {
        ControlPolicy::Scaled { family: Family::ErlangC, mode: Mode::Local }
    }

    pub fn tabulated(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain("admission table is empty".into()));
        }
        if let Some((k, p)) = probs.iter().enumerate().find(|(_, p)| !(**p >= 0.0 && **p <= 1.0)) {
            return Err(Error::Domain(format!("p({k}) = {p} is outside [0, 1]")));
        }
        Ok(ControlPolicy::Tabulated(probs.into()))
    }

    pub fn family(&self) -> Option<&Family> {
        match self {
            ControlPolicy::Scaled { family, .. } => Some(family),
            ControlPolicy::Tabulated(_) => None,
        }
    }

    /// The family of a scaled policy, or a domain error for tables.
    pub fn require_family(&self) -> Result<&Family> {
        self.family().ok_or_else(|| Error::Domain("tabulated policies have no scaling profile".into()))
    }

    /// Probability p_s(k) of admitting a customer who finds k others waiting.
    pub fn admit_prob(&self, s: u64, k: u64) -> f64 {
        let root = (s as f64).sqrt();
        match self {
            ControlPolicy::Tabulated(p) => p[(k as usize).min(p.len() - 1)],
            ControlPolicy::Scaled { family, mode } => match family {
                Family::ErlangB => 0.0,
                Family::ErlangC => 1.0,
                Family::ScaledBuffer { eta } => {
                    if ((k + 1) as f64) < eta * root {
                        1.0
                    } else {
                        0.0
                    }
                }
                _ => match mode {
                    Mode::Local => {
                        let a = family.rate((k + 1) as f64 / root).unwrap_or(f64::INFINITY);
                        1.0 / (1.0 + a / root)
                    }
                    Mode::Global => {
                        let here = family.profile((k + 1) as f64 / root);
                        let before = if k == 0 { 1.0 } else { family.profile(k as f64 / root) };
                        if before > 0.0 {
                            (here / before).clamp(0.0, 1.0)
                        } else {
                            0.0
                        }
                    }
                },
            },
        }
    }

    /// Cumulative product q_s(n) = p_s(0)⋯p_s(n).
    pub fn q_product(&self, s: u64, n: u64) -> f64 {
        match self {
            ControlPolicy::Scaled { family, mode: Mode::Global } => match family {
                Family::ErlangB => 0.0,
                _ => family.profile((n + 1) as f64 / (s as f64).sqrt()),
            },
            _ => self.q_iter(s).nth(n as usize).unwrap_or(0.0),
        }
    }

    /// The sequence q_s(0), q_s(1), … computed incrementally.
    pub fn q_iter(&self, s: u64) -> QIter<'_> {
        QIter { policy: self, s, n: 0, log_q: 0.0 }
    }

    /// The sequence ln q_s(0), ln q_s(1), …, which stays finite where
    /// q_s(n) itself underflows.
    pub fn ln_q_iter(&self, s: u64) -> impl Iterator<Item = f64> + '_ {
        let mut it = self.q_iter(s);
        std::iter::from_fn(move || Some(it.next_ln()))
    }

    pub fn gamma_min(&self) -> Result<GammaMin> {
        Ok(self.require_family()?.gamma_min())
    }

    /// Laplace transform L(γ) = ∫₀^∞ e^{−γx} f(x) dx of the scaling profile.
    pub fn laplace(&self, gamma: f64) -> Result<f64> {
        self.laplace_deriv(gamma, 0)
    }

    /// L (order 0), L′ (order 1) or L″ (order 2) at γ.
    pub fn laplace_deriv(&self, gamma: f64, order: u8) -> Result<f64> {
        if order > 2 {
            return Err(Error::Domain(format!("Laplace derivative order {order} not supported")));
        }
        let family = self.require_family()?;
        let gmin = family.gamma_min();
        if !(gamma > gmin.value) {
            return Err(Error::Domain(format!("Laplace transform needs γ > γ_min = {}, got {gamma}", gmin.value)));
        }
        if let Some(v) = family.laplace_closed(gamma, order) {
            return Ok(v);
        }
        laplace_by_quadrature(|x| family.profile(x), gamma, order)
    }

    /// Stability of the stationary distribution at the given load.
    pub fn stability(&self, params: &SystemParams) -> Stability {
        let rho = params.rho();
        let root = params.sqrt_s();
        let (rho_bound, approximate, rule) = match self {
            ControlPolicy::Tabulated(p) => {
                let tail = &p[p.len() - p.len().div_ceil(10)..];
                let limsup = tail.iter().cloned().fold(0.0, f64::max);
                let bound = if limsup > 0.0 { 1.0 / limsup } else { f64::INFINITY };
                (bound, true, "heuristic: P_s = max over the last 10% of the table")
            }
            ControlPolicy::Scaled { family, mode } => {
                let gmin = family.gamma_min();
                match mode {
                    Mode::Global => ((-gmin.value / root).exp(), gmin.approximate, "ρ < exp(−γ_min/√s)"),
                    Mode::Local => (1.0 - gmin.value / root, gmin.approximate, "ρ < 1 − γ_min/√s"),
                }
            }
        };
        let stable = rho < rho_bound;
        // At the boundary of a table the divergence of F_s cannot be decided
        // from finitely many entries.
        let indeterminate = matches!(self, ControlPolicy::Tabulated(_)) && rho == rho_bound;
        let verdict = if indeterminate {
            "indeterminate"
        } else if stable {
            "stable"
        } else {
            "unstable"
        };
        let diagnostic = format!(
            "{verdict} at ρ = {rho}: bound {rho_bound}{} [{rule}]",
            if approximate { " (estimated)" } else { "" }
        );
        Stability { stable, rho_bound, approximate, indeterminate, diagnostic }
    }
}

pub(crate) fn laplace_by_quadrature<F: Fn(f64) -> f64>(f: F, gamma: f64, order: u8) -> Result<f64> {
    let sign = if order == 1 { -1.0 } else { 1.0 };
    let opts = QuadOptions { abs_tol: 1e-15, rel_tol: 1e-13, max_intervals: 2000 };
    let width = if gamma > 1.0 { 1.0 / gamma } else { 1.0 };
    let r = integrate_to_inf(
        |x| {
            let v = (-gamma * x).exp() * f(x);
            if v == 0.0 {
                0.0
            } else {
                v * x.powi(order as i32)
            }
        },
        0.0,
        width,
        opts,
    )?;
    Ok(sign * r.value)
}

/// Iterator over q_s(0), q_s(1), …
pub struct QIter<'a> {
    policy: &'a ControlPolicy,
    s: u64,
    n: u64,
    log_q: f64,
}

impl QIter<'_> {
    /// ln q_s(n) for the next n; `−∞` once admission has stopped.
    pub fn next_ln(&mut self) -> f64 {
        let n = self.n;
        self.n += 1;
        let root = (self.s as f64).sqrt();
        match self.policy {
            ControlPolicy::Scaled { family, mode: Mode::Global } => match family {
                Family::ErlangB => f64::NEG_INFINITY,
                _ => family.profile((n + 1) as f64 / root).ln(),
            },
            ControlPolicy::Scaled { family: Family::ModifiedDrift { p }, mode: Mode::Local } => {
                // p_s ≡ 1/(1 − ln p/√s)
                -((n + 1) as f64) * (-p.ln() / root).ln_1p()
            }
            ControlPolicy::Scaled { family, mode: Mode::Local }
                if !matches!(family, Family::ErlangB | Family::ErlangC | Family::ScaledBuffer { .. }) =>
            {
                let a = family.rate((n + 1) as f64 / root).unwrap_or(f64::INFINITY);
                self.log_q -= (a / root).ln_1p();
                self.log_q
            }
            policy => {
                let p = policy.admit_prob(self.s, n);
                self.log_q += p.ln();
                self.log_q
            }
        }
    }
}

impl Iterator for QIter<'_> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.next_ln().exp())
    }
}

/// Window ψ(s) on which q_s(n) = f((n+1)/√s)(1 + O(s^{−1/4})) holds for
/// the local control a(x) = θx^α.
pub fn psi_window(theta: f64, alpha: f64, s: f64) -> f64 {
    // second bound: A^←(s^{1/4}) with A(x) = ∫₀ˣ a²
    let energy = ((2.0 * alpha + 1.0) / (theta * theta)).powf(1.0 / (2.0 * alpha + 1.0))
        * s.powf(1.0 / (4.0 * (2.0 * alpha + 1.0)));
    // first bound: a^←(s^{1/4}/2)
    let level = 0.5 * s.powf(0.25);
    let rate = if alpha == 0.0 {
        if theta <= level {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        (level / theta).powf(1.0 / alpha)
    };
    rate.min(energy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drift(p: f64) -> Family {
        Family::ModifiedDrift { p }
    }

    #[test]
    fn params_derivations() {
        let p = SystemParams::from_gamma(100, 0.1).unwrap();
        assert!((p.rho() - 0.99).abs() < 1e-15);
        assert!((p.lambda() - 99.0).abs() < 1e-12);
        assert!((p.gamma_s().unwrap() - (-10.0 * 0.99f64.ln())).abs() < 1e-14);
        assert!(SystemParams::from_gamma(4, 2.5).is_err());
        assert!(SystemParams::from_gamma(4, 2.0).unwrap().gamma_s().is_none());
        let q = SystemParams::from_rho(16, 0.75).unwrap();
        assert!((q.gamma() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn admit_prob_examples() {
        let c = ControlPolicy::erlang_c();
        assert_eq!(c.admit_prob(100, 7), 1.0);
        let local = ControlPolicy::local(drift(0.5)).unwrap();
        let oracle = 1.0 / (1.0 + (-0.5f64.ln()) / 10.0);
        assert!((local.admit_prob(100, 3) - oracle).abs() < 1e-15);
        assert!((oracle - 0.935_178_374_630_428_6).abs() < 1e-15);
        let buf = ControlPolicy::global(Family::ScaledBuffer { eta: 1.0 }).unwrap();
        assert_eq!(buf.admit_prob(100, 8), 1.0);
        assert_eq!(buf.admit_prob(100, 9), 0.0);
    }

    #[test]
    fn global_admit_reconstructs_ratios() {
        let g = ControlPolicy::global(Family::ErlangA { theta: 1.0 }).unwrap();
        let mut prod = 1.0;
        for k in 0..50 {
            prod *= g.admit_prob(25, k);
            assert!((prod - g.q_product(25, k)).abs() < 1e-14);
        }
    }

    #[test]
    fn q_product_examples() {
        let p = 0.3;
        let g = ControlPolicy::global(drift(p)).unwrap();
        assert!((g.q_product(25, 4) - p).abs() < 1e-15);
        assert_eq!(ControlPolicy::erlang_c().q_product(9, 40), 1.0);
        // a(x) = θx with θ = 1, s = 100: ∏_{k=0}^{9} 1/(1 + (k+1)/100)
        let l = ControlPolicy::local(Family::ErlangA { theta: 1.0 }).unwrap();
        let oracle: f64 = (1..=10).map(|k| 100.0 / (100.0 + k as f64)).product();
        assert!((l.q_product(100, 9) - oracle).abs() < 1e-14);
    }

    #[test]
    fn tabulated_validation_and_extrapolation() {
        assert!(ControlPolicy::tabulated(vec![0.5, 1.2]).is_err());
        assert!(ControlPolicy::tabulated(vec![]).is_err());
        let t = ControlPolicy::tabulated(vec![1.0, 0.5]).unwrap();
        assert_eq!(t.admit_prob(4, 10), 0.5);
        assert!((t.q_product(4, 3) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn custom_validation() {
        let dec: Func = Arc::new(|x: f64| 1.0 - 0.01 * x);
        assert!(ControlPolicy::local(Family::CustomLocal(dec)).is_err());
        let bad_f: Func = Arc::new(|x: f64| 2.0 - x.min(1.0));
        assert!(ControlPolicy::global(Family::CustomGlobal(bad_f)).is_err());
        assert!(ControlPolicy::local(drift(1.0)).is_err());
    }

    #[test]
    fn local_to_global_examples() {
        let zero: Func = Arc::new(|_| 0.0);
        assert_eq!(local_to_global(zero)(3.0), 1.0);
        let p: f64 = 0.4;
        let c: Func = Arc::new(move |_| -p.ln());
        assert!((local_to_global(c)(2.5) - p.powf(2.5)).abs() < 1e-13);
        let lin: Func = Arc::new(|x| 2.0 * x);
        assert!((local_to_global(lin)(1.0) - (-1.0f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn global_to_local_examples() {
        let one: Func = Arc::new(|_| 1.0);
        assert_eq!(global_to_local(one)(2.0).unwrap(), 0.0);
        let p: f64 = 0.3;
        let pf: Func = Arc::new(move |x| p.powf(x));
        assert!((global_to_local(pf)(1.7).unwrap() + p.ln()).abs() < 1e-8);
        let gauss: Func = Arc::new(|x| (-x * x).exp());
        assert!((global_to_local(gauss)(3.0).unwrap() - 6.0).abs() < 1e-5);
        let dead: Func = Arc::new(|x| if x < 1.0 { 1.0 } else { 0.0 });
        assert!(global_to_local(dead)(2.0).is_err());
    }

    #[test]
    fn round_trip_local_global_local() {
        let families: Vec<Func> = vec![Arc::new(|_| 0.7), Arc::new(|x| 1.3 * x), Arc::new(|x: f64| 0.5 * x.powf(1.5))];
        for a in families {
            let f: Func = Arc::new(local_to_global(a.clone()));
            let back = global_to_local(f);
            for i in 0..=40 {
                let x = 0.25 * i as f64;
                let got = back(x).unwrap();
                assert!((got - a(x)).abs() < 1e-6, "x={x}: {got} vs {}", a(x));
            }
        }
    }

    #[test]
    fn laplace_examples() {
        let c = ControlPolicy::erlang_c();
        assert_eq!(c.laplace(2.0).unwrap(), 0.5);
        assert_eq!(c.laplace_deriv(1.0, 1).unwrap(), -1.0);
        let b = ControlPolicy::global(Family::ScaledBuffer { eta: 1.0 }).unwrap();
        assert!((b.laplace(1.0).unwrap() - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((b.laplace(0.0).unwrap() - 1.0).abs() < 1e-15);
        let d = ControlPolicy::global(drift(0.5)).unwrap();
        let want = -1.0 / (1.0 - 0.5f64.ln()).powi(2);
        assert!((d.laplace_deriv(1.0, 1).unwrap() - want).abs() < 1e-15);
        assert!((want + 0.348_827_388_387_060_9).abs() < 1e-15);
        // Erlang A at γ = 0 with α = 1 (θ = 2): L′(0) = −1/2
        let ea = ControlPolicy::global(Family::ErlangA { theta: 2.0 }).unwrap();
        assert!((ea.laplace_deriv(0.0, 1).unwrap() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn laplace_domain_and_blowup() {
        let d = ControlPolicy::global(drift(0.5)).unwrap();
        let gmin = d.gamma_min().unwrap().value;
        assert!(d.laplace(gmin).is_err());
        assert!(d.laplace(gmin + 1e-4).unwrap() > 1e3);
        let t = ControlPolicy::tabulated(vec![0.5]).unwrap();
        assert!(t.laplace(1.0).is_err());
    }

    #[test]
    fn gamma_min_examples() {
        let p: f64 = 0.6;
        assert_eq!(ControlPolicy::global(drift(p)).unwrap().gamma_min().unwrap().value, p.ln());
        let ea = ControlPolicy::global(Family::ErlangA { theta: -2.0 * p.ln() }).unwrap();
        assert_eq!(ea.gamma_min().unwrap().value, f64::NEG_INFINITY);
        assert_eq!(ControlPolicy::erlang_c().gamma_min().unwrap().value, 0.0);
        let custom: Func = Arc::new(|x: f64| 2.0 * (1.0 - (-x).exp()));
        let g = ControlPolicy::local(Family::CustomLocal(custom)).unwrap().gamma_min().unwrap();
        assert!(g.approximate && (g.value + 2.0).abs() < 1e-9);
        let prof: Func = Arc::new(|x: f64| (-0.8 * x).exp());
        let g = ControlPolicy::global(Family::CustomGlobal(prof)).unwrap().gamma_min().unwrap();
        assert!(g.approximate && (g.value + 0.8).abs() < 1e-9);
    }

    #[test]
    fn stability_examples() {
        let c = ControlPolicy::erlang_c();
        assert!(c.stability(&SystemParams::from_gamma(100, 0.1).unwrap()).stable);
        assert!(!c.stability(&SystemParams::from_gamma(100, -0.1).unwrap()).stable);
        let p = (-1.0f64).exp();
        let local = ControlPolicy::local(drift(p)).unwrap();
        let params = SystemParams::from_gamma(100, -0.05).unwrap();
        assert!((params.rho() - 1.005).abs() < 1e-15);
        assert!(local.stability(&params).stable);
        let global = ControlPolicy::global(drift(p)).unwrap();
        let boundary = SystemParams::from_rho(100, (0.1f64).exp()).unwrap();
        assert!(!global.stability(&boundary).stable);
        let t = ControlPolicy::tabulated(vec![1.0, 0.5]).unwrap();
        assert!(t.stability(&SystemParams::from_rho(4, 1.9).unwrap()).stable);
        let edge = t.stability(&SystemParams::from_rho(4, 2.0).unwrap());
        assert!(!edge.stable && edge.indeterminate);
        assert!(edge.diagnostic.contains("heuristic"));
    }

    #[test]
    fn psi_window_examples() {
        assert!((psi_window(1.0, 1.0, 16.0) - 1.0).abs() < 1e-15);
        assert!((psi_window(0.5, 1.0, 1.0) - 1.0).abs() < 1e-15);
        let mut prev = 0.0;
        for k in 0..20 {
            let v = psi_window(0.7, 1.5, 2f64.powi(k));
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn truncated_moments_match_quadrature() {
        for &g in &[-2.0, -0.1, 0.0, 1e-4, 0.3, 3.0] {
            for m in 0..3 {
                let q = integrate(|x: f64| x.powi(m) * (-g * x).exp(), 0.0, 1.7, QuadOptions::precise()).unwrap().value;
                let c = truncated_moment(m, g, 1.7);
                assert!((q - c).abs() < 1e-13 * q.abs().max(1.0), "γ={g}, m={m}");
            }
        }
    }
}
