//! Special functions: the standard normal density and distribution, Mills'
//! ratio, Kummer's function with first parameter one, and the parabolic
//! cylinder functions of order ±1/2.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use crate::error::{Error, Result};
use crate::quad::{integrate, QuadOptions};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_677_939_946_059_934_381_9;

/// Crossover between the quadrature and continued-fraction branches of
/// [`mills_ratio`]. Both branches agree to better than 1e-13 here.
pub const MILLS_CROSSOVER: f64 = 4.0;

/// Maximum number of terms summed by [`kummer_m_1`].
pub const KUMMER_MAX_TERMS: usize = 1_000_000;

pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Φ(x)/φ(x), evaluated without forming either factor separately.
pub fn cdf_over_pdf(x: f64) -> f64 {
    SQRT_2 * mills_ratio(-x * FRAC_1_SQRT_2)
}

/// Hazard-type ratio g(x) = φ(x)/Φ(x).
pub fn pdf_over_cdf(x: f64) -> f64 {
    1.0 / cdf_over_pdf(x)
}

/// Mills' ratio χ(δ) = e^{δ²} ∫_δ^∞ e^{−y²} dy.
///
/// Below [`MILLS_CROSSOVER`] this integrates e^{−t²−2δt} over t ≥ 0; above it
/// the Laplace continued fraction of erfc is used, so e^{δ²} is never formed.
pub fn mills_ratio(delta: f64) -> f64 {
    if delta >= MILLS_CROSSOVER {
        mills_continued_fraction(delta)
    } else {
        mills_quadrature(delta)
    }
}

pub(crate) fn mills_quadrature(delta: f64) -> f64 {
    // Integrand falls below e^{-45} of its peak past this point.
    let upper = -delta + (delta.max(0.0).powi(2) + 45.0).sqrt();
    let opts = QuadOptions { abs_tol: 0.0, rel_tol: 1e-15, max_intervals: 500 };
    match integrate(|t| (-t * t - 2.0 * delta * t).exp(), 0.0, upper, opts) {
        Ok(r) => r.value,
        Err(_) => mills_continued_fraction(delta),
    }
}

pub(crate) fn mills_continued_fraction(delta: f64) -> f64 {
    // √π e^{x²} erfc(x) = 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    let mut tail = delta;
    for n in (1..=80).rev() {
        tail = delta + 0.5 * n as f64 / tail;
    }
    0.5 / tail
}

/// Derivative χ'(δ) = 2δχ(δ) − 1.
pub fn mills_ratio_deriv(delta: f64) -> f64 {
    2.0 * delta * mills_ratio(delta) - 1.0
}

/// Kummer's confluent hypergeometric function M(1, b, z) = Σ_n z^n/(b)_n.
pub fn kummer_m_1(b: f64, z: f64) -> Result<f64> {
    kummer_m_1_tail(b, z, 0)
}

/// Σ_{n ≥ skip} z^n/(b)_n, the series of M(1, b, z) with its first `skip`
/// terms removed. Summing the tail directly avoids cancelling the leading
/// terms when they are subtracted afterwards.
pub fn kummer_m_1_tail(b: f64, z: f64, skip: usize) -> Result<f64> {
    if !(b > 0.0) || !(z >= 0.0) || !z.is_finite() {
        return Err(Error::Domain(format!("M(1, b, z) needs b > 0 and z ≥ 0, got b={b}, z={z}")));
    }
    let mut term = 1.0;
    for n in 0..skip {
        term *= z / (b + n as f64);
    }
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut n = skip;
    while n < KUMMER_MAX_TERMS {
        // Neumaier summation
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
        let ratio = z / (b + n as f64);
        term *= ratio;
        if term == 0.0 || (ratio < 1.0 && term.abs() < 1e-17 * (sum + comp).abs()) {
            return Ok(sum + comp);
        }
        n += 1;
    }
    Err(Error::NonConvergence(format!("M(1, {b}, {z}) needs more than {KUMMER_MAX_TERMS} terms")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfOrder {
    /// U(1/2, z)
    Plus,
    /// U(−1/2, z)
    Minus,
}

/// Parabolic cylinder function U(±1/2, z).
pub fn parabolic_u_half(order: HalfOrder, z: f64) -> f64 {
    match order {
        HalfOrder::Minus => (-0.25 * z * z).exp(),
        // ∫_0^∞ e^{−t²/2−zt} dt = √2 χ(z/√2)
        HalfOrder::Plus => (-0.25 * z * z).exp() * SQRT_2 * mills_ratio(z * FRAC_1_SQRT_2),
    }
}

/// √π / 2, the value of χ(0).
pub const MILLS_AT_ZERO: f64 = 0.886_226_925_452_758_013_649_083_741_671_0;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate_to_inf;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn pdf_values() {
        assert!(close(normal_pdf(0.0), 0.398_942_280_401_432_7, 1e-15));
        assert_eq!(normal_pdf(1.7), normal_pdf(-1.7));
        // ∫_{-∞}^{1} φ = Φ(1); differentiate numerically instead: φ(1) = e^{-1/2}/√(2π)
        let oracle = (-0.5f64).exp() / (2.0 * PI).sqrt();
        assert!(close(normal_pdf(1.0), oracle, 1e-15));
    }

    #[test]
    fn cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        let v = normal_cdf(10.0);
        assert!(1.0 - v < 1e-20 && v <= 1.0);
        // brute-force quadrature of φ over (−∞, 0.1]
        let left = integrate_to_inf(|t| normal_pdf(-t), -0.1, 1.0, QuadOptions::precise()).unwrap();
        assert!((normal_cdf(0.1) - left.value).abs() < 1e-14);
    }

    #[test]
    fn cdf_symmetry_and_monotone() {
        let mut prev = 0.0;
        for i in -400..=400 {
            let x = i as f64 * 0.02;
            assert!((normal_cdf(x) + normal_cdf(-x) - 1.0).abs() <= 1e-14);
            let c = normal_cdf(x);
            assert!(c > prev);
            prev = c;
            assert!(normal_pdf(x) > 0.0);
        }
    }

    #[test]
    fn mills_at_zero_and_five() {
        assert!(close(mills_ratio(0.0), PI.sqrt() / 2.0, 1e-14));
        // e^{25} ∫_5^{45} e^{−y²} dy, written as ∫_0^{40} e^{−t²−10t} dt
        let oracle = integrate(|t: f64| (-t * t - 10.0 * t).exp(), 0.0, 40.0, QuadOptions::precise()).unwrap().value;
        assert!(close(mills_ratio(5.0), oracle, 1e-12));
    }

    #[test]
    fn mills_branches_agree_at_crossover() {
        for d in [3.5, 4.0, 4.5, 6.0] {
            let a = mills_quadrature(d);
            let b = mills_continued_fraction(d);
            assert!(close(a, b, 1e-13), "δ={d}: {a} vs {b}");
        }
    }

    #[test]
    fn mills_derivative_identity() {
        let h = 1e-5;
        let mut d = -2.0;
        while d <= 5.0 {
            let fd = (mills_ratio(d + h) - mills_ratio(d - h)) / (2.0 * h);
            assert!((fd - mills_ratio_deriv(d)).abs() < 1e-6, "δ={d}");
            d += 0.25;
        }
    }

    #[test]
    fn mills_positive_decreasing() {
        let mut prev = f64::INFINITY;
        for i in 0..=500 {
            let d = -10.0 + 0.1 * i as f64;
            let m = mills_ratio(d);
            assert!(m > 0.0 && m < prev, "δ={d}");
            prev = m;
        }
    }

    #[test]
    fn kummer_special_values() {
        assert_eq!(kummer_m_1(3.0, 0.0).unwrap(), 1.0);
        assert!(close(kummer_m_1(1.0, 1.0).unwrap(), std::f64::consts::E, 1e-15));
        assert!(kummer_m_1(0.0, 1.0).is_err());
        assert!(kummer_m_1(1.0, -1.0).is_err());
    }

    #[test]
    fn kummer_cap_reports_nonconvergence() {
        // z ≫ b: terms keep growing past the cap
        assert!(matches!(kummer_m_1(0.5, 1e7), Err(Error::NonConvergence(_))));
    }

    #[test]
    fn parabolic_u_values() {
        assert_eq!(parabolic_u_half(HalfOrder::Minus, 0.0), 1.0);
        assert!(close(parabolic_u_half(HalfOrder::Plus, 0.0), (PI / 2.0).sqrt(), 1e-14));
        let oracle = (-0.25f64).exp()
            * integrate(|t: f64| (-0.5 * t * t - t).exp(), 0.0, 50.0, QuadOptions::precise()).unwrap().value;
        assert!(close(parabolic_u_half(HalfOrder::Plus, 1.0), oracle, 1e-10));
    }

    #[test]
    fn cdf_over_pdf_matches_direct_ratio() {
        for x in [-3.0, -0.5, 0.0, 0.1, 1.0, 4.0] {
            let direct = normal_cdf(x) / normal_pdf(x);
            assert!(close(cdf_over_pdf(x), direct, 1e-13), "x={x}");
        }
    }
}
