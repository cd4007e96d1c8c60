//! Serializable command outputs. Every JSON document emitted by the tool
//! deserializes into one of these types with no unknown fields, which is
//! what the round-trip checks rely on.

use serde::{Deserialize, Serialize};

/// Finite values only; infinities and NaN become `None` so the JSON stays
/// valid and round-trips.
pub fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityInfo {
    pub stable: bool,
    /// Supremum of stable loads; `None` when every load is stable.
    pub rho_bound: Option<f64>,
    pub approximate: bool,
    pub diagnostic: String,
}

/// The four performance measures by one route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Measures {
    #[serde(rename = "F_s")]
    pub f: f64,
    #[serde(rename = "B_s")]
    pub b: f64,
    #[serde(rename = "D_s")]
    pub d: f64,
    #[serde(rename = "D_s^R")]
    pub d_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub policy: String,
    pub s: u64,
    pub gamma: f64,
    pub rho: f64,
    pub stability: StabilityInfo,
    pub exact: Measures,
    /// `F_s ≈ √s L(γ_s) − ½` with exact B_s.
    pub thm41: Option<Measures>,
    /// `F_s ≈ √s L(γ) + M(γ) + N(γ)/√s` with exact B_s.
    pub thm42: Option<Measures>,
    /// Two-term expansions `T1 + T2/√s` and `T1R/√s + T2R/s`, with the
    /// two-term F_s and B_s that enter them.
    pub corrected: Option<Measures>,
    /// Why a route is missing, one entry per missing route.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Row {
    pub s: u64,
    pub theta: f64,
    pub exact: f64,
    pub asymp: f64,
    pub approx: f64,
    /// Columns whose 5-decimal value differs from the published table.
    pub anomaly: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct T1Entry {
    pub theta: f64,
    pub t1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Report {
    pub gamma: f64,
    pub rows: Vec<Table1Row>,
    pub t1: Vec<T1Entry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepReport {
    pub var: String,
    /// Header of the CSV form; the first entry names the swept variable.
    pub columns: Vec<String>,
    /// One row per point; `None` where a value is undefined (for instance
    /// an unstable load).
    pub rows: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Estimate {
    pub point: f64,
    /// `None` when a single batch leaves the interval undefined.
    pub half_width_95: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimReport {
    pub policy: String,
    pub seed: u64,
    pub s: u64,
    pub gamma: f64,
    pub rho: f64,
    pub horizon: f64,
    pub warmup: f64,
    pub replications: usize,
    pub delay: Estimate,
    pub reject: Estimate,
    pub exact_delay: Option<f64>,
    pub exact_reject: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionReport {
    pub policy: String,
    pub s: u64,
    pub epsilon: f64,
    pub gamma_star: f64,
    pub gamma_corrected: Option<f64>,
    pub gamma_opt: f64,
    pub gap: f64,
    pub corrected_gap: Option<f64>,
    /// Load `1 − γ_opt/√s` at the exact optimum.
    pub rho_opt: f64,
}
