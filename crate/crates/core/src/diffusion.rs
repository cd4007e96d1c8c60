//! Stationary behaviour of the limiting diffusion of `(Q_s − s)/√s`.
//!
//! The limit has infinitesimal variance 2 and drift `−γ − x` below zero and
//! `−γ − a(x)` above. Its stationary density is
//! `ω(x) = C φ(x+γ)/φ(γ)` for `x < 0` and `C e^{−γx} f(x)` for `x ≥ 0`, with
//! `C = 1/(L(γ) + Φ(γ)/φ(γ))`.

use crate::control::ControlPolicy;
use crate::error::{Error, Result};
use crate::quad::{integrate, QuadOptions};
use crate::specfun::{cdf_over_pdf, normal_cdf, normal_pdf};

/// Below `−γ − LOWER_CLIP` the density is treated as zero.
pub const LOWER_CLIP: f64 = 40.0;

#[derive(Debug, Clone)]
pub struct DiffusionSpec {
    policy: ControlPolicy,
    gamma: f64,
    laplace: f64,
    mills: f64,
}

impl DiffusionSpec {
    pub fn new(policy: ControlPolicy, gamma: f64) -> Result<Self> {
        let family = policy.require_family()?;
        let gmin = family.gamma_min().value;
        if !(gamma > gmin) {
            return Err(Error::Domain(format!("diffusion limit needs γ > γ_min = {gmin}, got {gamma}")));
        }
        let laplace = policy.laplace(gamma)?;
        Ok(DiffusionSpec { policy, gamma, laplace, mills: cdf_over_pdf(gamma) })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Normalising constant `C(γ)`.
    pub fn constant(&self) -> f64 {
        1.0 / (self.laplace + self.mills)
    }

    /// Infinitesimal drift `m(x)`.
    pub fn drift(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            Ok(-self.gamma - x)
        } else {
            Ok(-self.gamma - self.policy.require_family()?.rate(x)?)
        }
    }

    /// Infinitesimal variance, constant 2.
    pub fn variance(&self) -> f64 {
        2.0
    }

    fn upper(&self, x: f64) -> f64 {
        let f = self.policy.family().expect("validated").profile(x);
        if f == 0.0 {
            0.0
        } else {
            (-self.gamma * x).exp() * f
        }
    }

    /// Stationary density ω(x).
    pub fn density(&self, x: f64) -> f64 {
        let c = self.constant();
        if x < 0.0 {
            if x < -self.gamma - LOWER_CLIP {
                return 0.0;
            }
            c * (-x * (0.5 * x + self.gamma)).exp()
        } else {
            c * self.upper(x)
        }
    }

    /// Stationary distribution function.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        let c = self.constant();
        if x < 0.0 {
            return Ok(c * normal_cdf(x + self.gamma) / normal_pdf(self.gamma));
        }
        if x == 0.0 {
            return Ok(c * self.mills);
        }
        let opts = QuadOptions { abs_tol: 1e-14, rel_tol: 1e-12, max_intervals: 2000 };
        let part = integrate(|u| self.upper(u), 0.0, x, opts)?.value;
        Ok((c * (self.mills + part)).min(1.0))
    }

    /// Stationary probability that the diffusion is positive,
    /// `L/(L + Φ(γ)/φ(γ))`.
    pub fn prob_positive(&self) -> f64 {
        self.laplace / (self.laplace + self.mills)
    }
}

/// ω(x) for the given policy and γ.
pub fn stationary_density(policy: &ControlPolicy, gamma: f64, x: f64) -> Result<f64> {
    Ok(DiffusionSpec::new(policy.clone(), gamma)?.density(x))
}

/// Stationary distribution function at x.
pub fn stationary_cdf(policy: &ControlPolicy, gamma: f64, x: f64) -> Result<f64> {
    DiffusionSpec::new(policy.clone(), gamma)?.cdf(x)
}

/// Stationary probability of a positive excursion.
pub fn prob_positive(policy: &ControlPolicy, gamma: f64) -> Result<f64> {
    Ok(DiffusionSpec::new(policy.clone(), gamma)?.prob_positive())
}
