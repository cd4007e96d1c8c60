//! Exact rational-arithmetic oracles for the series evaluations.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use qedctrl::erlang_a::fs_erlang_a_exact;
use qedctrl::exact::{delay_prob, erlang_b, erlang_c, f_series, h_a};
use qedctrl::{ControlPolicy, Family, SystemParams};

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Erlang B from its defining ratio `(a^s/s!)/Σ_{k≤s} a^k/k!`.
fn erlang_b_rational(s: u64, load: &BigRational) -> BigRational {
    let mut term = BigRational::one();
    let mut total = BigRational::one();
    for k in 1..=s {
        term = term * load / BigRational::from_integer(BigInt::from(k));
        total += &term;
    }
    term / total
}

/// Σ_{n<terms} q(n)ρ^{n+1} with `q(n) = Π_{k≤n} 1/(1 + (k+1)θ/s)`.
fn erlang_a_series_rational(s: i64, theta: i64, rho: &BigRational, terms: usize) -> BigRational {
    let mut q = BigRational::one();
    let mut pow = BigRational::one();
    let mut total = BigRational::zero();
    for n in 0..terms as i64 {
        q *= rat(s, s + (n + 1) * theta);
        pow *= rho;
        total += &q * &pow;
    }
    total
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn erlang_b_against_rationals() {
    for &(s, num, den) in &[(1u64, 1i64, 2i64), (5, 9, 10), (10, 99, 100), (50, 9, 10), (100, 99, 100), (100, 3, 2)] {
        let rho = rat(num, den);
        let load = &rho * BigRational::from_integer(BigInt::from(s));
        let want = erlang_b_rational(s, &load).to_f64().unwrap();
        let params = SystemParams::from_rho(s, num as f64 / den as f64).unwrap();
        let got = erlang_b(&params);
        assert!(rel(got, want) < 1e-13, "s={s} ρ={num}/{den}: {got} vs {want}");
    }
}

#[test]
fn erlang_c_against_rationals() {
    for &(s, num, den) in &[(1u64, 1i64, 2i64), (10, 9, 10), (100, 99, 100)] {
        let rho = rat(num, den);
        let load = &rho * BigRational::from_integer(BigInt::from(s));
        let b = erlang_b_rational(s, &load);
        let c = &b / (BigRational::one() - &rho * (BigRational::one() - &b));
        let params = SystemParams::from_rho(s, num as f64 / den as f64).unwrap();
        let want = c.to_f64().unwrap();
        assert!(rel(erlang_c(&params).unwrap(), want) < 1e-13);
        let via_policy = delay_prob(&ControlPolicy::erlang_c(), &params, 1e-15).unwrap();
        assert!(rel(via_policy, want) < 1e-12, "{via_policy} vs {want}");
    }
}

#[test]
fn erlang_a_series_against_rationals() {
    // ρ = 1 − 0.1/√s is rational for square s.
    for &(s, root, theta) in &[(16i64, 4i64, 1i64), (16, 4, 10), (64, 8, 1), (100, 10, 100)] {
        let rho = rat(10 * root - 1, 10 * root);
        let want = erlang_a_series_rational(s, theta, &rho, 400).to_f64().unwrap();
        let params = SystemParams::from_gamma(s as u64, 0.1).unwrap();
        let kummer = fs_erlang_a_exact(theta as f64, &params).unwrap();
        assert!(rel(kummer, want) < 1e-13, "Kummer s={s} θ={theta}: {kummer} vs {want}");
        let local = ControlPolicy::local(Family::ErlangA { theta: theta as f64 }).unwrap();
        let series = f_series(&local, &params, 1e-15).unwrap();
        assert!(rel(series, want) < 1e-13, "series s={s} θ={theta}: {series} vs {want}");
    }
}

#[test]
fn erlang_a_delay_table_cell() {
    // s = 16, θ = 1, γ = 0.1 has published exact delay 0.49313.
    let rho = rat(39, 40);
    let f = erlang_a_series_rational(16, 1, &rho, 400);
    let load = &rho * BigRational::from_integer(BigInt::from(16));
    let b = erlang_b_rational(16, &load);
    let d = (BigRational::one() + &f) / (b.recip() + &f);
    let want = d.to_f64().unwrap();
    assert!((want - 0.49313).abs() < 5e-6);
    let params = SystemParams::from_gamma(16, 0.1).unwrap();
    let got = h_a(1.0, fs_erlang_a_exact(1.0, &params).unwrap(), erlang_b(&params));
    assert!(rel(got, want) < 1e-13);
}
