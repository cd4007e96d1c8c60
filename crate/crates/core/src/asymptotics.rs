//! Corrected QED expansions of `F_s`, `B_s`, the delay probability and the
//! rejection probability.
//!
//! With `L` the Laplace transform of the scaling profile at γ,
//! `F_s ≈ √s L + M + N/√s`, `B_s ≈ g/√s + h/s` and
//! `D_s ≈ T1 + T2/√s`, `D_s^R ≈ T1R/√s + T2R/s`.

use serde::{Deserialize, Serialize};

use crate::control::{ControlPolicy, Family, SystemParams};
use crate::error::{Error, Result};
use crate::specfun::pdf_over_cdf;

/// Margin above γ_min inside which the expansions are refused.
pub const GAMMA_GUARD: f64 = 1e-9;

/// Threshold on |1 − γL| below which a non-trivial control is degenerate.
pub const DEGENERATE_EPS: f64 = 1e-12;

/// Coefficients of the corrected expansions at one value of γ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QedExpansion {
    pub gamma: f64,
    pub l: f64,
    pub lp: f64,
    pub lpp: f64,
    pub m: f64,
    pub n: f64,
    pub g: f64,
    pub h: f64,
    pub t1: f64,
    pub t2: f64,
    pub t1r: f64,
    pub t2r: f64,
    /// The profile is discontinuous; the expansions hold only on average
    /// over s.
    pub average_sense: bool,
    /// f'(0) was estimated by finite differences.
    pub approximate: bool,
}

/// Jagerman's two-term expansion of the Erlang B formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JagermanB {
    pub g: f64,
    pub h: f64,
    pub approx: f64,
}

fn guarded_family(policy: &ControlPolicy, gamma: f64) -> Result<&Family> {
    let family = policy.require_family()?;
    let gmin = family.gamma_min().value;
    if !(gamma > gmin + GAMMA_GUARD) || !gamma.is_finite() {
        return Err(Error::Domain(format!(
            "expansions need γ > γ_min + {GAMMA_GUARD} = {}, got {gamma}",
            gmin + GAMMA_GUARD
        )));
    }
    Ok(family)
}

/// g(γ) = φ(γ)/Φ(γ) and h(γ) = −⅓(γ² + (γ² + 2)g)g.
///
/// This h reproduces the reference approximation table. The second-order
/// coefficient of `B_s(1 − γ/√s) = g/√s + h/s + …` itself, obtained from
/// Laplace's method on `1/B_s`, is `−⅓(γ³ + (γ² + 2)g)g`; the two agree
/// only at γ = 0 and γ = 1, so away from there the two-term delay
/// approximations carry an O(1/s) error rather than o(1/√s).
pub fn jagerman_coefficients(gamma: f64) -> (f64, f64) {
    let g = pdf_over_cdf(gamma);
    let h = -(gamma * gamma + (gamma * gamma + 2.0) * g) * g / 3.0;
    (g, h)
}

/// All expansion coefficients at γ.
pub fn expansion(policy: &ControlPolicy, gamma: f64) -> Result<QedExpansion> {
    let family = guarded_family(policy, gamma)?;
    let (g, h) = jagerman_coefficients(gamma);
    let (l, lp, lpp, m, n, approximate) = if let Family::ErlangB = family {
        // F_s ≡ 0: every coefficient of its expansion vanishes.
        (0.0, 0.0, 0.0, 0.0, 0.0, false)
    } else {
        let l = policy.laplace_deriv(gamma, 0)?;
        let lp = policy.laplace_deriv(gamma, 1)?;
        let lpp = policy.laplace_deriv(gamma, 2)?;
        let (slope, approximate) = family.slope_at_zero();
        let g2 = gamma * gamma;
        let m = 0.5 * g2 * lp - 0.5;
        let n = g2 * gamma * lp / 3.0 + g2 * g2 * lpp / 8.0 + (gamma - slope) / 12.0;
        (l, lp, lpp, m, n, approximate)
    };
    let den = 1.0 + g * l;
    let t1 = g * l / den;
    let t2 = ((h + g * g) * l + g * (m + 1.0)) / (den * den);
    let (t1r, t2r) = if family.is_unit() {
        (0.0, 0.0)
    } else {
        let slack = 1.0 - gamma * l;
        if slack.abs() < DEGENERATE_EPS {
            return Err(Error::DegenerateControl(format!(
                "1 − γL(γ) = {slack:e} vanishes at γ = {gamma} for a control other than f ≡ 1"
            )));
        }
        let t1r = slack * g / den;
        let t2r = slack * h / den - gamma * g * (gamma * l + m) / den - slack * g * (h * l + g * m) / (den * den);
        (t1r, t2r)
    };
    Ok(QedExpansion {
        gamma,
        l,
        lp,
        lpp,
        m,
        n,
        g,
        h,
        t1,
        t2,
        t1r,
        t2r,
        average_sense: family.is_average_sense(),
        approximate,
    })
}

/// `F_s ≈ √s L(γ_s) − ½`.
pub fn fs_thm41(policy: &ControlPolicy, params: &SystemParams) -> Result<f64> {
    let gamma_s = params.gamma_s().ok_or_else(|| Error::Domain("γ_s is undefined at ρ = 0".into()))?;
    let family = guarded_family(policy, gamma_s)?;
    if let Family::ErlangB = family {
        return Ok(0.0);
    }
    Ok(params.sqrt_s() * policy.laplace(gamma_s)? - 0.5)
}

/// `F_s ≈ √s L(γ) + M(γ)`, plus `N(γ)/√s` when `with_n`.
pub fn fs_thm42(policy: &ControlPolicy, params: &SystemParams, with_n: bool) -> Result<f64> {
    let e = expansion(policy, params.gamma())?;
    let root = params.sqrt_s();
    let base = root * e.l + e.m;
    Ok(if with_n { base + e.n / root } else { base })
}

/// `B_s ≈ g/√s + h/s`.
pub fn jagerman_b(params: &SystemParams) -> JagermanB {
    let (g, h) = jagerman_coefficients(params.gamma());
    let s = params.s() as f64;
    JagermanB { g, h, approx: g / s.sqrt() + h / s }
}

/// Corrected delay probability: `(T1, T2, T1 + T2/√s)`.
pub fn corrected_delay(policy: &ControlPolicy, params: &SystemParams) -> Result<(f64, f64, f64)> {
    let e = expansion(policy, params.gamma())?;
    Ok((e.t1, e.t2, e.t1 + e.t2 / params.sqrt_s()))
}

/// Corrected rejection probability: `(T1R, T2R, T1R/√s + T2R/s)`.
pub fn corrected_reject(policy: &ControlPolicy, params: &SystemParams) -> Result<(f64, f64, f64)> {
    let e = expansion(policy, params.gamma())?;
    let root = params.sqrt_s();
    Ok((e.t1r, e.t2r, e.t1r / root + e.t2r / (root * root)))
}

/// Perturbation bound `|y(a − y)||Δx| + |1 + ax||Δy|` for
/// `H_a(x, y) = (1 + ax)/(1/y + x)`.
pub fn h_a_sensitivity(a: f64, x: f64, y: f64, dx: f64, dy: f64) -> Result<f64> {
    let inside = |v: f64| (0.0..=1.0).contains(&v);
    if !(x >= 0.0 && x + dx >= 0.0 && inside(y) && inside(y + dy)) || !a.is_finite() {
        return Err(Error::Domain(format!(
            "need x, x+Δx ≥ 0 and y, y+Δy ∈ [0, 1]; got x={x}, Δx={dx}, y={y}, Δy={dy}"
        )));
    }
    Ok((y * (a - y)).abs() * dx.abs() + (1.0 + a * x).abs() * dy.abs())
}
