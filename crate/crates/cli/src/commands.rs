//! The five subcommands.

use std::fs::File;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use qedctrl::asymptotics::{corrected_delay, corrected_reject, fs_thm41, fs_thm42, jagerman_b};
use qedctrl::dimension;
use qedctrl::erlang_a::{format5, table, table_t1, TABLE_GAMMA, TABLE_THETA};
use qedctrl::exact::{delay_prob, h_a, perf_measures};
use qedctrl::sim::{self, SimConfig};
use qedctrl::{ControlPolicy, Family, SystemParams};

use crate::report::*;
use crate::{open_output, CliError, CliResult, DimensionArgs, EvalArgs, OutputArgs, SimulateArgs, SweepArgs, SweepVar};

/// Load per server used by the curve sweeps when none is given.
pub const SWEEP_DEFAULT_RHO: f64 = 0.99;

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

fn write_json<T: Serialize>(output: &OutputArgs, value: &T) -> CliResult<()> {
    let mut out = open_output(&output.out)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Plain rendering of a number: fixed 10 decimals in the usual range,
/// scientific notation outside it.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e6).contains(&a) {
        format!("{v:.10}")
    } else {
        format!("{v:.6e}")
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| "-".into())
}

fn check_tol(tol: f64) -> CliResult<()> {
    if tol > 0.0 && tol < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--tol must lie in (0, 1), got {tol}")))
    }
}

/// Measures from an approximation of F_s and a value of B_s, with
/// `D_s = H_1(F, B)` and `D_s^R = (1 + (1 − 1/ρ)F)/(1/B + F)`.
fn measures_from(params: &SystemParams, f: f64, b: f64) -> Measures {
    let rho = params.rho();
    let d_r = if rho > 0.0 && b > 0.0 { (1.0 + (1.0 - 1.0 / rho) * f) / (1.0 / b + f) } else { 0.0 };
    Measures { f, b, d: h_a(1.0, f, b), d_r }
}

pub fn eval_report(spec: &crate::policy::PolicySpec, params: &SystemParams, tol: f64) -> CliResult<EvalReport> {
    check_tol(tol)?;
    let policy = &spec.policy;
    let st = policy.stability(params);
    let exact = perf_measures(policy, params, tol)?;
    let exact = Measures { f: exact.f_series, b: exact.erlang_b, d: exact.delay, d_r: exact.reject };
    let mut notes = Vec::new();
    let mut route = |name: &str, r: qedctrl::Result<Measures>| match r {
        Ok(m) => Some(m),
        Err(e) => {
            notes.push(format!("{name} unavailable: {e}"));
            None
        }
    };
    let thm41 = route("thm41", fs_thm41(policy, params).map(|f| measures_from(params, f, exact.b)));
    let thm42 = route("thm42", fs_thm42(policy, params, true).map(|f| measures_from(params, f, exact.b)));
    let corrected = route(
        "corrected",
        (|| {
            let f = fs_thm42(policy, params, false)?;
            let b = jagerman_b(params).approx;
            Ok(Measures { f, b, d: corrected_delay(policy, params)?.2, d_r: corrected_reject(policy, params)?.2 })
        })(),
    );
    Ok(EvalReport {
        policy: spec.text.clone(),
        s: params.s(),
        gamma: params.gamma(),
        rho: params.rho(),
        stability: StabilityInfo {
            stable: st.stable,
            rho_bound: finite(st.rho_bound),
            approximate: st.approximate,
            diagnostic: st.diagnostic,
        },
        exact,
        thm41,
        thm42,
        corrected,
        notes,
    })
}

pub fn eval(a: &EvalArgs) -> CliResult<()> {
    let params = a.load.params(a.s)?;
    let report = eval_report(&a.policy, &params, a.tol)?;
    if a.output.json {
        return write_json(&a.output, &report);
    }
    let mut out = open_output(&a.output.out)?;
    writeln!(out, "{:<11}{}", "policy", report.policy)?;
    writeln!(out, "{:<11}{}", "s", report.s)?;
    writeln!(out, "{:<11}{}", "gamma", num(report.gamma))?;
    writeln!(out, "{:<11}{}", "rho", num(report.rho))?;
    writeln!(out, "{:<11}{}", "stability", report.stability.diagnostic)?;
    writeln!(out, "{:<11}{:>18}{:>18}{:>18}{:>18}", "route", "F_s", "B_s", "D_s", "D_s^R")?;
    for (name, m) in [
        ("exact", Some(report.exact)),
        ("thm41", report.thm41),
        ("thm42", report.thm42),
        ("corrected", report.corrected),
    ] {
        let cells = match m {
            Some(m) => [m.f, m.b, m.d, m.d_r].map(num),
            None => ["-".to_string(), "-".into(), "-".into(), "-".into()],
        };
        writeln!(out, "{name:<11}{:>18}{:>18}{:>18}{:>18}", cells[0], cells[1], cells[2], cells[3])?;
    }
    for n in &report.notes {
        writeln!(out, "note: {n}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn table1_report() -> CliResult<Table1Report> {
    const COLUMNS: [&str; 3] = ["exact", "asymp", "approx"];
    let rows = table()?
        .into_iter()
        .map(|c| Table1Row {
            s: c.s,
            theta: c.theta,
            exact: c.exact,
            asymp: c.asymp,
            approx: c.approx,
            anomaly: c.mismatches().iter().zip(COLUMNS).filter(|(m, _)| **m).map(|(_, n)| n.to_string()).collect(),
        })
        .collect();
    let t1 = TABLE_THETA.iter().zip(table_t1()?).map(|(&theta, t1)| T1Entry { theta, t1 }).collect();
    Ok(Table1Report { gamma: TABLE_GAMMA, rows, t1 })
}

pub fn table1(a: &OutputArgs) -> CliResult<()> {
    let report = table1_report()?;
    if a.json {
        return write_json(a, &report);
    }
    let mut w = csv_writer(open_output(&a.out)?);
    w.write_record(["s", "theta", "exact", "asymp", "approx", "anomaly"])?;
    for r in &report.rows {
        w.write_record([
            r.s.to_string(),
            r.theta.to_string(),
            format5(r.exact),
            format5(r.asymp),
            format5(r.approx),
            r.anomaly.join(";"),
        ])?;
    }
    for e in &report.t1 {
        w.write_record([
            "T1".to_string(),
            e.theta.to_string(),
            String::new(),
            String::new(),
            format5(e.t1),
            String::new(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `steps` points from `from` to `to`, endpoints included.
fn grid(from: f64, to: f64, steps: usize) -> CliResult<Vec<f64>> {
    if steps == 0 || !from.is_finite() || !to.is_finite() {
        return Err(CliError::Usage("a sweep needs finite bounds and at least one point".into()));
    }
    if steps == 1 {
        return Ok(vec![from]);
    }
    Ok((0..steps)
        .map(|i| if i + 1 == steps { to } else { from + (to - from) * i as f64 / (steps - 1) as f64 })
        .collect())
}

fn drift_policy(p: f64, global: bool) -> qedctrl::Result<ControlPolicy> {
    if p <= 0.0 {
        Ok(ControlPolicy::erlang_b())
    } else if p >= 1.0 {
        Ok(ControlPolicy::erlang_c())
    } else if global {
        ControlPolicy::global(Family::ModifiedDrift { p })
    } else {
        ControlPolicy::local(Family::ModifiedDrift { p })
    }
}

pub fn sweep_report(a: &SweepArgs) -> CliResult<SweepReport> {
    check_tol(a.tol)?;
    let tol = a.tol;
    let uses_policy = matches!(a.var, SweepVar::Gamma | SweepVar::S);
    if uses_policy != a.policy.is_some() {
        return Err(CliError::Usage(if uses_policy {
            "the γ and s sweeps need --policy".into()
        } else {
            "--policy applies to the γ and s sweeps only".into()
        }));
    }
    if a.var == SweepVar::Gamma && (a.gamma.is_some() || a.rho.is_some()) {
        return Err(CliError::Usage("the γ sweep sets the load itself; drop --gamma/--rho".into()));
    }
    let fixed = |s: u64| -> qedctrl::Result<SystemParams> {
        match (a.gamma, a.rho) {
            (Some(g), _) => SystemParams::from_gamma(s, g),
            (None, r) => SystemParams::from_rho(s, r.unwrap_or(SWEEP_DEFAULT_RHO)),
        }
    };
    let (lo, hi) = match a.var {
        SweepVar::P => (0.0, 1.0),
        SweepVar::Eta => (0.2, 3.0),
        SweepVar::Gamma => (0.0, 3.0),
        SweepVar::S => (1.0, 100.0),
    };
    let mut xs = grid(a.from.unwrap_or(lo), a.to.unwrap_or(hi), a.steps)?;
    let (var, columns): (&str, &[&str]) = match a.var {
        SweepVar::P => {
            if xs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(CliError::Usage("p must lie in [0, 1]".into()));
            }
            ("p", &["p", "global_exact", "local_exact", "approx"])
        }
        SweepVar::Eta => {
            if xs.iter().any(|&e| !(e > 0.0)) {
                return Err(CliError::Usage("η must be positive".into()));
            }
            ("eta", &["eta", "exact", "approx"])
        }
        SweepVar::Gamma => ("gamma", &["gamma", "exact", "approx"]),
        SweepVar::S => {
            if xs.iter().any(|&s| !(s >= 1.0)) {
                return Err(CliError::Usage("s must be at least 1".into()));
            }
            xs.iter_mut().for_each(|s| *s = s.round());
            xs.dedup();
            ("s", &["s", "exact", "approx"])
        }
    };
    // Surface a bad fixed load once, rather than as an empty column.
    if matches!(a.var, SweepVar::P | SweepVar::Eta) {
        fixed(a.s)?;
    }
    let policy = a.policy.as_ref().map(|p| p.policy.clone());
    let rows = xs
        .par_iter()
        .map(|&x| {
            let exact = |pol: &ControlPolicy, p: &SystemParams| delay_prob(pol, p, tol).ok();
            let approx = |pol: &ControlPolicy, p: &SystemParams| corrected_delay(pol, p).ok().map(|t| t.2);
            match a.var {
                SweepVar::P => {
                    let p = fixed(a.s).ok();
                    let (g, l) = (drift_policy(x, true).ok(), drift_policy(x, false).ok());
                    let eval =
                        |pol: &Option<ControlPolicy>, f: &dyn Fn(&ControlPolicy, &SystemParams) -> Option<f64>| {
                            pol.as_ref().zip(p.as_ref()).and_then(|(pol, p)| f(pol, p))
                        };
                    vec![Some(x), eval(&g, &exact), eval(&l, &exact), eval(&g, &approx)]
                }
                SweepVar::Eta => {
                    let pol = ControlPolicy::global(Family::ScaledBuffer { eta: x }).ok();
                    let p = fixed(a.s).ok();
                    let pair = pol.as_ref().zip(p.as_ref());
                    vec![Some(x), pair.and_then(|(o, p)| exact(o, p)), pair.and_then(|(o, p)| approx(o, p))]
                }
                SweepVar::Gamma | SweepVar::S => {
                    let pol = policy.as_ref().expect("checked above");
                    let p = if a.var == SweepVar::Gamma { SystemParams::from_gamma(a.s, x) } else { fixed(x as u64) };
                    match p {
                        Ok(p) => vec![Some(x), exact(pol, &p), approx(pol, &p)],
                        Err(_) => vec![Some(x), None, None],
                    }
                }
            }
        })
        .collect();
    Ok(SweepReport { var: var.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows })
}

pub fn sweep(a: &SweepArgs) -> CliResult<()> {
    let report = sweep_report(a)?;
    if a.output.json {
        return write_json(&a.output, &report);
    }
    let mut w = csv_writer(open_output(&a.output.out)?);
    w.write_record(&report.columns)?;
    for row in &report.rows {
        w.write_record(row.iter().map(|v| v.map(|v| format!("{v}")).unwrap_or_default()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    check_tol(a.tol)?;
    let params = a.load.params(a.s)?;
    let mut config = SimConfig::new(params, a.policy.policy.clone(), a.horizon, a.reps, a.seed);
    if let Some(w) = a.warmup {
        config.warmup = w;
    }
    let result = sim::simulate(&config)?;
    if let Some(path) = &a.hist {
        result.write_hist_csv(File::create(path)?)?;
    }
    let exact = perf_measures(&config.policy, &params, a.tol).ok();
    let est = |e: &sim::SimEstimate| Estimate { point: e.point, half_width_95: finite(e.half_width_95) };
    let report = SimReport {
        policy: a.policy.text.clone(),
        seed: a.seed,
        s: params.s(),
        gamma: params.gamma(),
        rho: params.rho(),
        horizon: config.horizon,
        warmup: config.warmup,
        replications: config.replications,
        delay: est(&result.delay),
        reject: est(&result.reject),
        exact_delay: exact.map(|m| m.delay),
        exact_reject: exact.map(|m| m.reject),
    };
    if a.output.json {
        return write_json(&a.output, &report);
    }
    let mut out = open_output(&a.output.out)?;
    writeln!(out, "{:<14}{}", "policy", report.policy)?;
    writeln!(out, "{:<14}{}", "seed", report.seed)?;
    writeln!(out, "{:<14}{}", "s", report.s)?;
    writeln!(out, "{:<14}{}", "gamma", num(report.gamma))?;
    writeln!(out, "{:<14}{}", "rho", num(report.rho))?;
    writeln!(out, "{:<14}{}", "horizon", report.horizon)?;
    writeln!(out, "{:<14}{}", "warmup", report.warmup)?;
    writeln!(out, "{:<14}{}", "replications", report.replications)?;
    for (name, e, x) in [("delay", report.delay, report.exact_delay), ("reject", report.reject, report.exact_reject)] {
        writeln!(out, "{:<14}{} ± {}", name, num(e.point), opt_num(e.half_width_95))?;
        writeln!(out, "{:<14}{}", format!("exact_{name}"), opt_num(x))?;
    }
    out.flush()?;
    Ok(())
}

pub fn dimension_report(spec: &crate::policy::PolicySpec, s: u64, epsilon: f64) -> CliResult<DimensionReport> {
    let d = dimension::dimension(&spec.policy, s, epsilon)?;
    Ok(DimensionReport {
        policy: spec.text.clone(),
        s: d.s,
        epsilon: d.epsilon,
        gamma_star: d.gamma_star,
        gamma_corrected: d.gamma_corrected,
        gamma_opt: d.gamma_opt,
        gap: d.gap,
        corrected_gap: d.corrected_gap,
        rho_opt: 1.0 - d.gamma_opt / (s as f64).sqrt(),
    })
}

pub fn dimension(a: &DimensionArgs) -> CliResult<()> {
    let report = dimension_report(&a.policy, a.s, a.epsilon)?;
    if a.output.json {
        return write_json(&a.output, &report);
    }
    let mut out = open_output(&a.output.out)?;
    writeln!(out, "{:<16}{}", "policy", report.policy)?;
    writeln!(out, "{:<16}{}", "s", report.s)?;
    writeln!(out, "{:<16}{}", "epsilon", num(report.epsilon))?;
    writeln!(out, "{:<16}{}", "gamma_star", num(report.gamma_star))?;
    writeln!(out, "{:<16}{}", "gamma_corrected", opt_num(report.gamma_corrected))?;
    writeln!(out, "{:<16}{}", "gamma_opt", num(report.gamma_opt))?;
    writeln!(out, "{:<16}{}", "gap", num(report.gap))?;
    writeln!(out, "{:<16}{}", "corrected_gap", opt_num(report.corrected_gap))?;
    writeln!(out, "{:<16}{}", "rho_opt", num(report.rho_opt))?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_includes_endpoints() {
        assert_eq!(grid(0.0, 1.0, 3).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(grid(2.0, 5.0, 1).unwrap(), vec![2.0]);
        assert!(grid(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn number_rendering() {
        assert_eq!(num(0.5), "0.5000000000");
        assert_eq!(num(0.0), "0.0000000000");
        assert_eq!(num(1.5e-7), "1.500000e-7");
    }

    #[test]
    fn approximate_measures_reduce_to_exact_inputs() {
        let p = SystemParams::from_rho(1, 0.5).unwrap();
        let m = measures_from(&p, 1.0, 1.0 / 3.0);
        assert!((m.d - 0.5).abs() < 1e-15);
        assert_eq!(m.d_r, 0.0);
    }
}
