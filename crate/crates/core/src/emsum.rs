//! Euler–Maclaurin summation at half-integer samples with computable
//! remainder bounds.
//!
//! For a smooth integrable `g`,
//! `Σ_{n≥0} g((n+1)/√s) ≈ √s ∫_{1/(2√s)}^∞ g + g'(1/(2√s))/(24√s)`, with
//! remainder at most `(1/(12√s)) ∫|g''|` (order 1) or
//! `(1/(384 s√s)) ∫|g''''|` (order 2).

use serde::{Deserialize, Serialize};

use crate::control::{ControlPolicy, Family};
use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_to_inf, QuadOptions};

/// Inflation applied to remainder bounds built on finite-difference
/// derivatives.
pub const FD_BOUND_INFLATION: f64 = 1.1;

/// |B_2(½)| / 2! — coefficient of the first correction term.
const B2_HALF_OVER_2: f64 = 1.0 / 24.0;
/// B_4(½) / 4! = (7/240)/24.
const B4_HALF_OVER_24: f64 = 7.0 / 5760.0;
/// |B_2|/2! and |B_4|/4!.
const B2_OVER_2: f64 = 1.0 / 12.0;
const B4_OVER_24: f64 = 1.0 / 720.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmResult {
    pub approx: f64,
    pub remainder_bound: f64,
    pub order: u8,
    /// Estimated absolute error of `approx` from the quadrature.
    pub quad_error: f64,
    /// Derivatives came from finite differences (bound inflated).
    pub approximate: bool,
}

fn tight() -> QuadOptions {
    QuadOptions { abs_tol: 1e-300, rel_tol: 1e-15, max_intervals: 4000 }
}

/// Half-infinite integral ∫_a^∞ of `f`, with the panel width chosen from
/// the decay scale.
fn integrate_tail<F: Fn(f64) -> f64>(f: F, a: f64, scale: f64) -> Result<(f64, f64)> {
    let r = integrate_to_inf(f, a, scale, tight())?;
    Ok((r.value, r.error))
}

/// EM approximation of `Σ_{n≥0} g((n+1)/√s)`.
///
/// `deriv(k, x)` must return `g^{(k)}(x)` for `k = 1..=2·order`; `scale` is
/// a length over which `g` varies appreciably (used to size quadrature
/// panels).
pub fn em_sum<G, D>(g: G, deriv: D, s: f64, order: u8, scale: f64) -> Result<EmResult>
where
    G: Fn(f64) -> f64,
    D: Fn(u8, f64) -> f64,
{
    if !(s > 0.0) {
        return Err(Error::Domain(format!("s must be positive, got {s}")));
    }
    if order != 1 && order != 2 {
        return Err(Error::Domain(format!("EM order must be 1 or 2, got {order}")));
    }
    let root = s.sqrt();
    let x0 = 0.5 / root;
    let (integral, err_int) = integrate_tail(&g, x0, scale)?;
    let approx = root * integral + deriv(1, x0) / (24.0 * root);
    let k = 2 * order;
    let (abs_int, _) = integrate_tail(|x| deriv(k, x).abs(), 0.0, scale)?;
    let remainder_bound = if order == 1 { abs_int / (12.0 * root) } else { abs_int / (384.0 * s * root) };
    Ok(EmResult { approx, remainder_bound, order, quad_error: root * err_int, approximate: false })
}

/// Derivatives of `g(x) = e^{−γx} f(x)` from those of `f`, by the product
/// rule.
fn g_derivs(gamma: f64, x: f64, fd: &[f64; 5]) -> [f64; 5] {
    const BINOM: [[f64; 5]; 5] = [
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [1.0, 1.0, 0.0, 0.0, 0.0],
        [1.0, 2.0, 1.0, 0.0, 0.0],
        [1.0, 3.0, 3.0, 1.0, 0.0],
        [1.0, 4.0, 6.0, 4.0, 1.0],
    ];
    let e = (-gamma * x).exp();
    let mut out = [0.0; 5];
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..=k {
            acc += BINOM[k][j] * (-gamma).powi((k - j) as i32) * fd[j];
        }
        *o = e * acc;
    }
    out
}

/// Finite-difference derivatives of `f` up to order 4, using forward-shifted
/// stencils near the origin where `f` is undefined for negative arguments.
fn fd_derivs<F: Fn(f64) -> f64>(f: &F, x: f64) -> [f64; 5] {
    let h = 1e-2 * x.abs().max(1.0);
    let c = x.max(2.0 * h);
    let v = [f(c - 2.0 * h), f(c - h), f(c), f(c + h), f(c + 2.0 * h)];
    // value and derivatives at c, shifted back to x by Taylor expansion
    let d1 = (-v[4] + 8.0 * v[3] - 8.0 * v[1] + v[0]) / (12.0 * h);
    let d2 = (-v[4] + 16.0 * v[3] - 30.0 * v[2] + 16.0 * v[1] - v[0]) / (12.0 * h * h);
    let d3 = (v[4] - 2.0 * v[3] + 2.0 * v[1] - v[0]) / (2.0 * h * h * h);
    let d4 = (v[4] - 4.0 * v[3] + 6.0 * v[2] - 4.0 * v[1] + v[0]) / (h * h * h * h);
    if c == x {
        return [v[2], d1, d2, d3, d4];
    }
    let t = x - c;
    [f(x), d1 + t * d2 + 0.5 * t * t * d3 + t * t * t * d4 / 6.0, d2 + t * d3 + 0.5 * t * t * d4, d3 + t * d4, d4]
}

/// EM approximation of `F_s = Σ e^{−γ(n+1)/√s} f((n+1)/√s)` for a scaled
/// policy; pass `γ = γ_s` to approximate the exact series.
pub fn profile_em(policy: &ControlPolicy, gamma: f64, s: f64, order: u8) -> Result<EmResult> {
    let family = policy.require_family()?;
    if family.is_average_sense() || matches!(family, Family::ErlangB) {
        return Err(Error::Domain(format!("{family:?} has no smooth profile")));
    }
    let gmin = family.gamma_min().value;
    if !(gamma > gmin) {
        return Err(Error::Domain(format!("need γ > γ_min = {gmin}, got {gamma}")));
    }
    let decay = (gamma - gmin).min(1.0 + gamma.abs());
    let scale = if decay.is_finite() && decay > 0.0 { (1.0 / decay).min(1e3) } else { 1.0 };
    let g = |x: f64| (-gamma * x).exp() * family.profile(x);
    if family.profile_derivs(0.0).is_some() {
        let deriv = |k: u8, x: f64| {
            let fd = family.profile_derivs(x).expect("closed-form family");
            g_derivs(gamma, x, &fd)[k as usize]
        };
        em_sum(g, deriv, s, order, scale)
    } else {
        let prof = |x: f64| family.profile(x);
        let deriv = |k: u8, x: f64| g_derivs(gamma, x, &fd_derivs(&prof, x))[k as usize];
        let mut r = em_sum(g, deriv, s, order, scale)?;
        r.remainder_bound *= FD_BOUND_INFLATION;
        r.approximate = true;
        Ok(r)
    }
}

/// Both sides of the second EM formula on `[0, N+1]` for one order `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondFormulaReport {
    /// Σ_{n=0}^{N} h(n + ½).
    pub lhs: f64,
    /// ∫₀^{N+1} h plus all m correction terms (first form).
    pub rhs_full: f64,
    /// ∫₀^{N+1} h plus the first m − 1 correction terms (second form).
    pub rhs_reduced: f64,
    /// |lhs − rhs_full| and its bound |B_{2m}|/(2m)! ∫|h^{(2m)}|.
    pub residual_full: f64,
    pub bound_full: f64,
    /// |lhs − rhs_reduced| and its bound 2(1 − 2^{−2m}) |B_{2m}|/(2m)! ∫|h^{(2m)}|.
    pub residual_reduced: f64,
    pub bound_reduced: f64,
}

impl SecondFormulaReport {
    pub fn holds(&self, slack: f64) -> bool {
        self.residual_full <= self.bound_full + slack && self.residual_reduced <= self.bound_reduced + slack
    }
}

/// Evaluates both forms of the half-sample EM formula for `h` on
/// `[0, N+1]`, where `deriv(k, x) = h^{(k)}(x)` for `k ≤ 2m`.
pub fn em_second_formula_check<H, D>(h: H, deriv: D, n: u32, m: u8) -> Result<SecondFormulaReport>
where
    H: Fn(f64) -> f64,
    D: Fn(u8, f64) -> f64,
{
    if m != 1 && m != 2 {
        return Err(Error::Domain(format!("order m must be 1 or 2, got {m}")));
    }
    if n == 0 {
        return Err(Error::Domain("N must be positive".into()));
    }
    let end = (n + 1) as f64;
    let opts = tight();
    let lhs: f64 = (0..=n).map(|k| h(k as f64 + 0.5)).sum();
    let mut integral = 0.0;
    let mut abs_high = 0.0;
    for k in 0..=n {
        let (a, b) = (k as f64, k as f64 + 1.0);
        integral += integrate(&h, a, b, opts)?.value;
        abs_high += integrate(|x| deriv(2 * m, x).abs(), a, b, opts)?.value;
    }
    let c1 = -B2_HALF_OVER_2 * (deriv(1, end) - deriv(1, 0.0));
    let c2 = B4_HALF_OVER_24 * (deriv(3, end) - deriv(3, 0.0));
    let (rhs_full, rhs_reduced, coef) =
        if m == 1 { (integral + c1, integral, B2_OVER_2) } else { (integral + c1 + c2, integral + c1, B4_OVER_24) };
    let shrink = 2.0 * (1.0 - 0.25f64.powi(m as i32));
    Ok(SecondFormulaReport {
        lhs,
        rhs_full,
        rhs_reduced,
        residual_full: (lhs - rhs_full).abs(),
        bound_full: coef * abs_high,
        residual_reduced: (lhs - rhs_reduced).abs(),
        bound_reduced: shrink * coef * abs_high,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_derivs(k: u8, x: f64) -> f64 {
        if k.is_multiple_of(2) {
            (-x).exp()
        } else {
            -(-x).exp()
        }
    }

    #[test]
    fn geometric_example() {
        let truth = 1.0 / (0.1f64.exp() - 1.0);
        assert!((truth - 9.508_331).abs() < 1e-6);
        for order in [1, 2] {
            let r = em_sum(|x: f64| (-x).exp(), exp_derivs, 100.0, order, 1.0).unwrap();
            assert!((r.approx - truth).abs() <= r.remainder_bound, "order {order}: {r:?}");
        }
    }

    #[test]
    fn order_two_bound_tighter() {
        for s in [32.0, 64.0, 1000.0] {
            let b1 = em_sum(|x: f64| (-x).exp(), exp_derivs, s, 1, 1.0).unwrap().remainder_bound;
            let b2 = em_sum(|x: f64| (-x).exp(), exp_derivs, s, 2, 1.0).unwrap().remainder_bound;
            assert!(b2 < b1);
        }
    }

    #[test]
    fn zero_function() {
        let r = em_sum(|_| 0.0, |_, _| 0.0, 50.0, 2, 1.0).unwrap();
        assert_eq!(r.approx, 0.0);
        assert_eq!(r.remainder_bound, 0.0);
    }

    #[test]
    fn second_formula_quadratic() {
        let r = em_second_formula_check(
            |x| x * x,
            |k, x| match k {
                1 => 2.0 * x,
                2 => 2.0,
                _ => 0.0,
            },
            3,
            1,
        )
        .unwrap();
        assert!((r.lhs - 21.0).abs() < 1e-13);
        assert!((r.rhs_full - (64.0 / 3.0 - 1.0 / 3.0)).abs() < 1e-12);
        assert!(r.residual_full < 1e-12);
        assert!(r.holds(1e-12));
    }

    #[test]
    fn second_formula_constant() {
        let r = em_second_formula_check(|_| 2.5, |_, _| 0.0, 7, 2).unwrap();
        assert!(r.residual_full < 1e-13 && r.residual_reduced < 1e-13);
        assert_eq!(r.bound_full, 0.0);
    }

    #[test]
    fn second_formula_exponential() {
        for m in [1, 2] {
            let r = em_second_formula_check(|x: f64| (-x).exp(), exp_derivs, 20, m).unwrap();
            assert!(r.holds(1e-14), "m={m}: {r:?}");
        }
    }

    #[test]
    fn analytic_and_fd_derivatives_agree() {
        let fam = Family::ErlangA { theta: 1.3 };
        for &x in &[0.0, 0.01, 0.5, 2.0] {
            let exact = fam.profile_derivs(x).unwrap();
            let approx = fd_derivs(&|y| fam.profile(y), x);
            for k in 0..5 {
                assert!(
                    (exact[k] - approx[k]).abs() < 1e-2 * exact[k].abs().max(1.0),
                    "x={x}, k={k}: {} vs {}",
                    exact[k],
                    approx[k]
                );
            }
        }
    }

    #[test]
    fn g_derivs_product_rule() {
        // f ≡ 1: g^{(k)} = (−γ)^k e^{−γx}
        let d = g_derivs(0.7, 1.5, &[1.0, 0.0, 0.0, 0.0, 0.0]);
        for (k, v) in d.iter().enumerate() {
            assert!((v - (-0.7f64).powi(k as i32) * (-1.05f64).exp()).abs() < 1e-15);
        }
    }
}
