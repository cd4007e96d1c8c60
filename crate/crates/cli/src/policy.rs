//! Text grammar for admission policies.
//!
//! ```text
//! [local:|global:] const:θ | linear:θ | power:θ,α | drift:p | buffer:η
//!                | erlangB | erlangC | table:<path>
//! ```
//!
//! `const:θ` is the constant control a ≡ θ (the drift family with
//! p = e^{−θ}), `linear:θ` is Erlang A. Controls given by a rate function
//! default to local mode; `buffer:η` is defined by its profile and
//! defaults to global mode. `table:` reads whitespace-separated admission
//! probabilities p_s(0), p_s(1), ….

use std::fmt;
use std::fs;
use std::str::FromStr;

use qedctrl::{ControlPolicy, Family, Mode};

/// A parsed policy together with the text it came from.
#[derive(Clone, Debug)]
pub struct PolicySpec {
    pub text: String,
    pub policy: ControlPolicy,
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

fn number(field: &str, what: &str) -> Result<f64, String> {
    let v: f64 = field.trim().parse().map_err(|_| format!("{what}: `{field}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{what}: `{field}` is not finite"))
    }
}

fn single(args: Option<&str>, what: &str) -> Result<f64, String> {
    let a = args.ok_or_else(|| format!("{what} needs a parameter, e.g. `{what}:1`"))?;
    if a.contains(',') {
        return Err(format!("{what} takes one parameter, got `{a}`"));
    }
    number(a, what)
}

/// Reads a whitespace-separated list of admission probabilities.
pub fn read_table(path: &str) -> Result<Vec<f64>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read admission table `{path}`: {e}"))?;
    text.split_whitespace().enumerate().map(|(k, w)| number(w, &format!("p({k}) in `{path}`"))).collect()
}

fn build(mode: Option<Mode>, family: Family) -> Result<ControlPolicy, String> {
    let mode = mode.unwrap_or(if matches!(family, Family::ScaledBuffer { .. }) { Mode::Global } else { Mode::Local });
    match mode {
        Mode::Local => ControlPolicy::local(family),
        Mode::Global => ControlPolicy::global(family),
    }
    .map_err(|e| e.to_string())
}

impl FromStr for PolicySpec {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, String> {
        let (mode, rest) = if let Some(r) = text.strip_prefix("global:") {
            (Some(Mode::Global), r)
        } else if let Some(r) = text.strip_prefix("local:") {
            (Some(Mode::Local), r)
        } else {
            (None, text)
        };
        let (name, args) = match rest.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (rest, None),
        };
        let policy = match name {
            "erlangB" | "erlangC" => {
                if args.is_some() {
                    return Err(format!("{name} takes no parameter"));
                }
                if mode.is_some() {
                    return Err(format!("{name} has no local/global variant"));
                }
                if name == "erlangB" {
                    ControlPolicy::erlang_b()
                } else {
                    ControlPolicy::erlang_c()
                }
            }
            "const" => {
                let theta = single(args, "const")?;
                if !(theta > 0.0) {
                    return Err(format!("const needs θ > 0, got {theta}"));
                }
                build(mode, Family::ModifiedDrift { p: (-theta).exp() })?
            }
            "linear" => build(mode, Family::ErlangA { theta: single(args, "linear")? })?,
            "drift" => build(mode, Family::ModifiedDrift { p: single(args, "drift")? })?,
            "buffer" => build(mode, Family::ScaledBuffer { eta: single(args, "buffer")? })?,
            "power" => {
                let a = args.ok_or("power needs two parameters, e.g. `power:1,0.5`")?;
                let (t, al) = a.split_once(',').ok_or_else(|| format!("power needs `θ,α`, got `{a}`"))?;
                build(mode, Family::Power { theta: number(t, "power θ")?, alpha: number(al, "power α")? })?
            }
            "table" => {
                if mode.is_some() {
                    return Err("table has no local/global variant".into());
                }
                let path = args.filter(|p| !p.is_empty()).ok_or("table needs a file path, e.g. `table:p.txt`")?;
                ControlPolicy::tabulated(read_table(path)?).map_err(|e| e.to_string())?
            }
            other => {
                return Err(format!(
                    "unknown policy `{other}`; expected const, linear, power, drift, buffer, erlangB, erlangC or table"
                ))
            }
        };
        Ok(PolicySpec { text: text.to_string(), policy })
    }
}
