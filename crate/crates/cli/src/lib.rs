//! Command-line front end: evaluate measures, reproduce the Erlang A
//! comparison table and the delay curves, run simulations and solve the
//! dimensioning problem.

pub mod commands;
pub mod policy;
pub mod report;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::policy::PolicySpec;

/// Default series truncation tolerance.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "QEDCTRL_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] qedctrl::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 usage, 3 domain or stability, 4 numerical failure, 1 for output
    /// failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_numerical() => 4,
            CliError::Core(_) => 3,
            CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "qedctrl", version, about = "Many-server queues with scaled admission control in the QED regime")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact and asymptotic F_s, B_s, D_s and D_s^R at one load.
    Eval(EvalArgs),
    /// Erlang A delay probabilities at γ = 0.1: exact, asymptotic and
    /// corrected, for s = 1…1024 and θ ∈ {1, 10, 100}.
    Table1(OutputArgs),
    /// Delay probability along a parameter sweep.
    Sweep(SweepArgs),
    /// Monte Carlo estimates of the delay and rejection probabilities.
    Simulate(SimulateArgs),
    /// Square-root, corrected and exact staffing for a delay target.
    Dimension(DimensionArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Emit JSON instead of text or CSV.
    #[arg(long)]
    pub json: bool,
    /// Write to this file instead of standard output.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

/// Load given either as γ with ρ = 1 − γ/√s, or as ρ directly.
#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct LoadArgs {
    /// QED slack γ; the load is ρ = 1 − γ/√s.
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    /// Load per server ρ.
    #[arg(long)]
    pub rho: Option<f64>,
}

impl LoadArgs {
    pub fn params(&self, s: u64) -> CliResult<qedctrl::SystemParams> {
        Ok(match (self.gamma, self.rho) {
            (Some(g), None) => qedctrl::SystemParams::from_gamma(s, g)?,
            (None, Some(r)) => qedctrl::SystemParams::from_rho(s, r)?,
            _ => return Err(CliError::Usage("give exactly one of --gamma and --rho".into())),
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Admission policy, e.g. `linear:1`, `global:drift:0.5`, `erlangC`.
    #[arg(long)]
    pub policy: PolicySpec,
    /// Number of servers.
    #[arg(long)]
    pub s: u64,
    #[command(flatten)]
    pub load: LoadArgs,
    /// Truncation tolerance of the series.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepVar {
    /// Drift parameter p of f(x) = p^x, global against local control.
    P,
    /// Buffer size η of the scaled buffer.
    Eta,
    /// QED slack γ at fixed s.
    Gamma,
    /// Number of servers at fixed load.
    S,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Swept variable.
    #[arg(long, value_enum)]
    pub var: SweepVar,
    /// First point (defaults: p 0, η 0.2, γ 0, s 1).
    #[arg(long, allow_negative_numbers = true)]
    pub from: Option<f64>,
    /// Last point (defaults: p 1, η 3, γ 3, s 100).
    #[arg(long, allow_negative_numbers = true)]
    pub to: Option<f64>,
    /// Number of points, endpoints included.
    #[arg(long, default_value_t = 101)]
    pub steps: usize,
    /// Policy for the γ and s sweeps.
    #[arg(long)]
    pub policy: Option<PolicySpec>,
    /// Number of servers (not used by the s sweep).
    #[arg(long, default_value_t = 10)]
    pub s: u64,
    /// Fixed slack (p, η and s sweeps); defaults to ρ = 0.99.
    #[arg(long, conflicts_with = "rho", allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    /// Fixed load (p, η and s sweeps).
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub policy: PolicySpec,
    #[arg(long)]
    pub s: u64,
    #[command(flatten)]
    pub load: LoadArgs,
    /// Simulated time per replication, warmup included.
    #[arg(long, default_value_t = 1e5)]
    pub horizon: f64,
    /// Discarded initial period; defaults to 10·s.
    #[arg(long)]
    pub warmup: Option<f64>,
    /// Independent replications.
    #[arg(long, default_value_t = 4)]
    pub reps: usize,
    /// Seed of the random streams.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Also write the time-average histogram of the number in system here.
    #[arg(long, value_name = "PATH")]
    pub hist: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DimensionArgs {
    #[arg(long)]
    pub policy: PolicySpec,
    #[arg(long)]
    pub s: u64,
    /// Delay probability target ε ∈ (0, 1).
    #[arg(long)]
    pub epsilon: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Opens the destination chosen by `--out`.
pub fn open_output(out: &Option<PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Caps the global worker pool at `QEDCTRL_THREADS` when it is set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the worker pool: {e}")))
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Eval(a) => commands::eval(&a),
        Command::Table1(a) => commands::table1(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Dimension(a) => commands::dimension(&a),
    }
}
