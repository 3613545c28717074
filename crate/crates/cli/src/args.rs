//! Command-line surface: one subcommand per artifact family.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

/// Closed-form deferral scheduling with a grid oracle and a Monte Carlo lab.
#[derive(Debug, Parser)]
#[command(name = "defersched", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Socially optimal policy with regime diagnostics.
    Solve(SolveArgs),
    /// Symmetric equilibrium strategy with its landmarks.
    Nash(NashArgs),
    /// One seeded run of the slotted system under a policy family.
    Simulate(SimulateArgs),
    /// Average-cost and cost-ratio curves across arrival rates.
    Sweep(SweepArgs),
    /// Built-in consistency checks; exits 1 when any check fails.
    Validate(ValidateArgs),
}

/// Artifact format and destination, shared by every subcommand.
#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Write the artifact here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Which closed-form policy family a simulation runs under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Optimal,
    Nash,
}

impl Mode {
    #[must_use]
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Optimal => "optimal",
            Mode::Nash => "nash",
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Per-slot arrival probability, strictly inside (0, 1).
    #[arg(long, requires = "psi")]
    pub p: Option<f64>,
    /// Service demand per request.
    #[arg(long, requires = "p")]
    pub psi: Option<f64>,
    /// Waiting charge for splitting a request across two slots.
    #[arg(long)]
    pub d: f64,
    /// Heterogeneous demand mix as demand:probability pairs, e.g.
    /// "1:0.25,3:0.25"; replaces --p/--psi.
    #[arg(long, conflicts_with_all = ["p", "psi"])]
    pub table: Option<String>,
    /// Overlay the grid oracle's greedy policy as sampled plot data.
    #[arg(long, conflicts_with = "table")]
    pub oracle: bool,
    /// Grid points per axis for the oracle overlay.
    #[arg(long, default_value_t = defersched_core::oracle::DEFAULT_GRID_POINTS)]
    pub grid: usize,
    /// Convergence tolerance for the oracle overlay.
    #[arg(long, default_value_t = defersched_core::oracle::DEFAULT_TOL)]
    pub tol: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct NashArgs {
    /// Per-slot arrival probability, strictly inside (0, 1).
    #[arg(long)]
    pub p: f64,
    /// Service demand per request.
    #[arg(long)]
    pub psi: f64,
    /// Waiting charge for splitting a request across two slots.
    #[arg(long)]
    pub d: f64,
    /// Also report the best-response certificate residual on a grid of this
    /// spacing over [0, psi].
    #[arg(long)]
    pub certificate: bool,
    /// Grid points for the certificate residual.
    #[arg(long, default_value_t = defersched_core::oracle::DEFAULT_GRID_POINTS)]
    pub grid: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Per-slot arrival probability; the edges 0 and 1 are allowed here.
    #[arg(long)]
    pub p: f64,
    /// Service demand per request.
    #[arg(long)]
    pub psi: f64,
    /// Waiting charge for splitting a request across two slots.
    #[arg(long)]
    pub d: f64,
    /// Policy family to simulate.
    #[arg(long, value_enum, default_value_t = Mode::Optimal)]
    pub mode: Mode,
    /// Number of slots to run.
    #[arg(long, default_value_t = 1_000_000)]
    pub horizon: u64,
    /// RNG seed; identical seeds reproduce runs bit for bit.
    #[arg(long, default_value_t = 17)]
    pub seed: u64,
    /// Emit the arrival-slot pending histogram instead of the scalar report.
    #[arg(long)]
    pub histogram: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Arrival probabilities to sweep, comma separated, each inside (0, 1).
    #[arg(long, value_delimiter = ',', required = true)]
    pub p: Vec<f64>,
    /// Service demand per request.
    #[arg(long)]
    pub psi: f64,
    /// Waiting charge for splitting a request across two slots.
    #[arg(long)]
    pub d: f64,
    /// Number of slots per run.
    #[arg(long, default_value_t = 1_000_000)]
    pub horizon: u64,
    /// Seeds per point: the runs use seed, seed+1, ..., seed+seeds-1,
    /// paired between the two policy families.
    #[arg(long, default_value_t = 8)]
    pub seeds: usize,
    /// First RNG seed.
    #[arg(long, default_value_t = 17)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Per-slot arrival probability, strictly inside (0, 1).
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    /// Service demand per request.
    #[arg(long, default_value_t = 2.0)]
    pub psi: f64,
    /// Waiting charge for splitting a request across two slots.
    #[arg(long, default_value_t = 1.0)]
    pub d: f64,
    /// Grid points per axis for the oracle checks.
    #[arg(long, default_value_t = defersched_core::oracle::DEFAULT_GRID_POINTS)]
    pub grid: usize,
    /// Convergence tolerance for the oracle checks.
    #[arg(long, default_value_t = defersched_core::oracle::DEFAULT_TOL)]
    pub tol: f64,
    /// Where to write the JSON lines (stdout otherwise).
    #[arg(long)]
    pub out: Option<PathBuf>,
}
