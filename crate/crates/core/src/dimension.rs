//! Inverse dimensioning: the slack γ that meets a delay target ε, either
//! for the limiting first-order approximation (square-root staffing), for
//! the corrected two-term approximation, or exactly for a finite system.

use crate::asymptotics::expansion;
use crate::control::{ControlPolicy, SystemParams};
use crate::error::{Error, Result};
use crate::exact::delay_prob;

/// Initial upper end of the γ bracket.
pub const GAMMA_HI: f64 = 20.0;
/// Offset above γ_min for the lower end of the bracket.
pub const GAMMA_MIN_OFFSET: f64 = 1e-6;
/// Bisection stops when the bracket is narrower than this.
pub const STAR_TOL: f64 = 1e-10;
pub const OPT_TOL: f64 = 1e-9;
/// Grid size of the monotonicity check.
const MONOTONE_GRID: usize = 48;
/// Relative slack in the monotonicity check, absorbing evaluation noise.
const MONOTONE_SLACK: f64 = 1e-10;
/// Number of times the bracket ends may be pushed outwards.
const MAX_EXPANSIONS: usize = 12;
/// Relative distance to the stability boundary below which a load is
/// treated as unstable by the exact solver; the series there needs more
/// than ~10⁷ terms and the delay is indistinguishable from 1.
const BOUNDARY_MARGIN: f64 = 1e-5;
/// Series tolerance used for exact delay evaluations.
const EXACT_TOL: f64 = 1e-14;

/// Result of [`dimension`]: the three slacks and the gaps to the exact one.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Dimensioning {
    pub s: u64,
    pub epsilon: f64,
    pub gamma_star: f64,
    pub gamma_corrected: Option<f64>,
    pub gamma_opt: f64,
    /// `|γ_opt − γ*|`.
    pub gap: f64,
    /// `|γ_opt − γ**|` for the corrected slack.
    pub corrected_gap: Option<f64>,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("delay target must lie in (0, 1), got {epsilon}")))
    }
}

/// Bisection for a decreasing `h` with `h(lo) > target > h(hi)`.
fn bisect<H: FnMut(f64) -> Result<f64>>(mut h: H, mut lo: f64, mut hi: f64, target: f64, tol: f64) -> Result<f64> {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Lower end of the γ search range for the limiting approximations.
fn lower_start(policy: &ControlPolicy) -> Result<(f64, bool)> {
    let gmin = policy.gamma_min()?.value;
    if gmin.is_finite() {
        Ok((gmin + GAMMA_MIN_OFFSET.max(1e-9 * gmin.abs()), false))
    } else {
        Ok((-1.0, true))
    }
}

/// Brackets and solves `h(γ) = ε` for a limiting approximation `h` that is
/// expected to decrease from near 1 to near 0.
fn solve_limit<H: FnMut(f64) -> Result<f64>>(
    mut h: H,
    policy: &ControlPolicy,
    epsilon: f64,
    what: &str,
) -> Result<f64> {
    check_epsilon(epsilon)?;
    let (mut lo, expandable) = lower_start(policy)?;
    let mut h_lo = h(lo)?;
    let mut n = 0;
    while h_lo <= epsilon && expandable && n < MAX_EXPANSIONS {
        lo *= 2.0;
        h_lo = h(lo)?;
        n += 1;
    }
    let mut hi = GAMMA_HI.max(lo + 1.0);
    let mut h_hi = h(hi)?;
    n = 0;
    while h_hi >= epsilon && n < MAX_EXPANSIONS {
        hi *= 2.0;
        h_hi = h(hi)?;
        n += 1;
    }
    if !(h_lo > epsilon && h_hi < epsilon) {
        return Err(Error::NoRoot(format!(
            "{what} = {epsilon} not attained: {what}({lo}) = {h_lo}, {what}({hi}) = {h_hi}"
        )));
    }
    // Pull the upper end in to the first grid point below target, so that a
    // two-term approximation that turns back up far in the tail (where it
    // is meaningless) does not spoil the monotonicity check.
    for i in 1..MONOTONE_GRID {
        let x = lo + (hi - lo) * i as f64 / MONOTONE_GRID as f64;
        if h(x)? < epsilon {
            hi = x;
            break;
        }
    }
    verify_monotone(&mut h, lo, hi, what)?;
    bisect(h, lo, hi, epsilon, STAR_TOL)
}

fn verify_monotone<H: FnMut(f64) -> Result<f64>>(h: &mut H, lo: f64, hi: f64, what: &str) -> Result<()> {
    let mut prev = h(lo)?;
    for i in 1..=MONOTONE_GRID {
        let x = if i == MONOTONE_GRID { hi } else { lo + (hi - lo) * i as f64 / MONOTONE_GRID as f64 };
        let v = h(x)?;
        if v > prev + MONOTONE_SLACK * prev.abs().max(1e-300) {
            return Err(Error::NoRoot(format!(
                "{what} is not decreasing in γ on [{lo}, {hi}]: rises from {prev} to {v} near γ = {x}"
            )));
        }
        prev = v;
    }
    Ok(())
}

/// γ* with `T1(γ*) = ε`; the square-root staffing rule sets
/// `ρ = 1 − γ*/√s`.
pub fn gamma_star(policy: &ControlPolicy, epsilon: f64) -> Result<f64> {
    solve_limit(|g| Ok(expansion(policy, g)?.t1), policy, epsilon, "T1")
}

/// γ** with `T1(γ**) + T2(γ**)/√s = ε`.
pub fn gamma_corrected(policy: &ControlPolicy, s: u64, epsilon: f64) -> Result<f64> {
    if s == 0 {
        return Err(Error::Domain("number of servers must be positive".into()));
    }
    let root = (s as f64).sqrt();
    solve_limit(
        |g| {
            let e = expansion(policy, g)?;
            Ok(e.t1 + e.t2 / root)
        },
        policy,
        epsilon,
        "T1 + T2/√s",
    )
}

/// Exact delay probability as a function of γ; loads beyond the stability
/// region count as delay 1, the limit at the stability boundary.
fn exact_delay(policy: &ControlPolicy, s: u64, gamma: f64) -> Result<f64> {
    let params = SystemParams::from_gamma(s, gamma)?;
    match delay_prob(policy, &params, EXACT_TOL) {
        Err(Error::Unstable(_)) => Ok(1.0),
        other => other,
    }
}

/// γ_opt solving the exact constraint `D_s(1 − γ/√s) = ε`.
pub fn gamma_opt(policy: &ControlPolicy, s: u64, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    if s == 0 {
        return Err(Error::Domain("number of servers must be positive".into()));
    }
    let root = (s as f64).sqrt();
    let h = |g: f64| exact_delay(policy, s, g);
    // ρ = 0 has delay 0, so γ = √s is always an upper end. Walk down with
    // doubling steps until the delay exceeds the target. At an unstable (or
    // nearly unstable) point the step is halved instead, so the series is
    // never summed right at the stability boundary.
    let mut hi = root;
    let mut step = 0.25f64.min(0.5 * root);
    let mut lo = None;
    for _ in 0..4 * MAX_EXPANSIONS {
        let g = hi - step;
        let params = SystemParams::from_gamma(s, g)?;
        let st = policy.stability(&params);
        if st.stable && !(params.rho() > st.rho_bound * (1.0 - BOUNDARY_MARGIN)) {
            if h(g)? > epsilon {
                lo = Some(g);
                break;
            }
            hi = g;
            step *= 2.0;
        } else {
            step *= 0.5;
            if step < OPT_TOL {
                return Err(Error::NoRoot(format!(
                    "delay {epsilon} not attained before the stability boundary near γ = {g}"
                )));
            }
        }
    }
    let lo = lo.ok_or_else(|| Error::NoRoot(format!("delay {epsilon} not attained for γ ≥ {}", hi - step)))?;
    let mut hh = h;
    verify_monotone(&mut hh, lo, hi, "D_s")?;
    bisect(hh, lo, hi, epsilon, OPT_TOL * 1e-2)
}

/// γ*, γ**, γ_opt and the optimality gaps for one target.
pub fn dimension(policy: &ControlPolicy, s: u64, epsilon: f64) -> Result<Dimensioning> {
    let gamma_star = gamma_star(policy, epsilon)?;
    let gamma_opt = gamma_opt(policy, s, epsilon)?;
    let gamma_corrected = gamma_corrected(policy, s, epsilon).ok();
    Ok(Dimensioning {
        s,
        epsilon,
        gamma_star,
        gamma_corrected,
        gamma_opt,
        gap: (gamma_opt - gamma_star).abs(),
        corrected_gap: gamma_corrected.map(|g| (gamma_opt - g).abs()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::Family;
    use crate::exact::erlang_c;
    use crate::specfun::{normal_cdf, normal_pdf};

    #[test]
    fn erlang_c_round_trip() {
        let pol = ControlPolicy::erlang_c();
        let eps = expansion(&pol, 1.0).unwrap().t1;
        assert!((gamma_star(&pol, eps).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn halfin_whitt_half() {
        // γΦ(γ)/φ(γ) = 1 by plain bisection
        let (mut lo, mut hi) = (0.0f64, 2.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * normal_cdf(mid) / normal_pdf(mid) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let g = gamma_star(&ControlPolicy::erlang_c(), 0.5).unwrap();
        assert!((g - lo).abs() < 1e-9, "{g} vs {lo}");
    }

    #[test]
    fn erlang_a_table_gamma() {
        let pol = ControlPolicy::global(Family::ErlangA { theta: 1.0 }).unwrap();
        let g = gamma_star(&pol, 0.46017).unwrap();
        assert!((g - 0.1).abs() < 1e-4, "{g}");
    }

    #[test]
    fn exact_round_trip() {
        let pol = ControlPolicy::erlang_c();
        let eps = erlang_c(&SystemParams::from_gamma(100, 0.5).unwrap()).unwrap();
        assert!((gamma_opt(&pol, 100, eps).unwrap() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn gap_shrinks() {
        let pol = ControlPolicy::erlang_c();
        let gs = gamma_star(&pol, 0.5).unwrap();
        let gaps: Vec<f64> = [10, 100, 1000].iter().map(|&s| (gamma_opt(&pol, s, 0.5).unwrap() - gs).abs()).collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }

    #[test]
    fn drift_with_negative_gamma_min() {
        let pol = ControlPolicy::local(Family::ModifiedDrift { p: 0.5 }).unwrap();
        let d = dimension(&pol, 50, 0.3).unwrap();
        assert!(d.gamma_star.is_finite() && d.gamma_opt.is_finite());
        let back = exact_delay(&pol, 50, d.gamma_opt).unwrap();
        assert!((back - 0.3).abs() < 1e-8);
    }

    #[test]
    fn unreachable_targets() {
        assert!(matches!(gamma_star(&ControlPolicy::erlang_b(), 0.2), Err(Error::NoRoot(_))));
        assert!(matches!(gamma_star(&ControlPolicy::erlang_c(), 1.5), Err(Error::Domain(_))));
        assert!(matches!(gamma_opt(&ControlPolicy::erlang_c(), 10, 0.0), Err(Error::Domain(_))));
    }
}
