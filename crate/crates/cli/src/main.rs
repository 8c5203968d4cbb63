//! `mixpois`: command-line access to the approximations, exact formulas,
//! simulators and staffing solver. Every subcommand writes CSV.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod table;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Rare-event probabilities for mixed Poisson counts and infinite-server staffing.
#[derive(Debug, Parser)]
#[command(name = "mixpois", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Asymptotic approximation of P_N(a) or p_N(a), choosing the formula from alpha.
    ///
    /// Requires a above the mean rate. Outside the proven ranges of alpha only the
    /// logarithmic rate is reported (regime LogOnly).
    Approx(ApproxArgs),
    /// Exact negative binomial p_N(a) for exponential rates, against its expansion.
    ///
    /// Requires --dist exp:<λ> or gamma:1,<λ>, and N a an integer for every N.
    ExactGamma(ExactGammaArgs),
    /// Crude Monte Carlo or importance sampling estimate of P_N(a) or p_N(a).
    ///
    /// is-fast is meant for alpha > 1, is-slow for alpha < 1 with a between the
    /// mean rate and the support maximum.
    Simulate(SimulateArgs),
    /// Approximation of q_N(a) and Q_N(a) for the infinite-server queue (alpha = 1).
    ///
    /// Requires a above the mean load ν ∫_0^1 F̄.
    QueueApprox(QueueApproxArgs),
    /// Crude Monte Carlo estimate of Q_N(a) or q_N(a) for the infinite-server queue.
    QueueSim(QueueSimArgs),
    /// Slot retention weights ω_i(N), i = 1..N.
    Omega(OmegaArgs),
    /// Smallest level a with Q̌_N(a) = eps and the implied number of servers.
    Staff(StaffArgs),
    /// Print the invocations that regenerate the published figures and tables.
    Repro(ReproArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Quantity {
    /// Point probability p_N(a) = P(count = Na).
    #[value(name = "p")]
    Point,
    /// Tail probability P_N(a) = P(count >= Na).
    #[value(name = "P")]
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Mc,
    IsFast,
    IsSlow,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write CSV to this file instead of stdout.
    #[arg(long)]
    pub output: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
pub struct ApproxArgs {
    /// Rate law: exp:<λ>, gamma:<β>,<λ>, pois:<λ>, twopoint:<p>,<λ1>,<λ2> or det:<λ>.
    #[arg(long)]
    pub dist: String,
    /// Resampling exponent alpha > 0.
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: f64,
    /// Level a, above the mean rate.
    #[arg(long = "a", allow_negative_numbers = true)]
    pub a: f64,
    /// Scale N >= 1; a comma-separated list gives one row per value.
    #[arg(long = "N", value_delimiter = ',', required = true)]
    pub n: Vec<f64>,
    /// Tail (P) or point (p) probability.
    #[arg(long, value_enum, default_value = "P")]
    pub quantity: Quantity,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ExactGammaArgs {
    /// Rate law exp:<λ> or gamma:1,<λ>.
    #[arg(long)]
    pub dist: String,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long = "a", allow_negative_numbers = true)]
    pub a: f64,
    /// Scale N >= 1 (comma-separated list allowed); N a must be an integer.
    #[arg(long = "N", value_delimiter = ',', required = true)]
    pub n: Vec<f64>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Number of independent runs.
    #[arg(long, default_value_t = 1_000_000)]
    pub runs: u64,
    /// Base seed of the random streams.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of independent streams; results depend on (seed, shards).
    #[arg(long, default_value_t = 1)]
    pub shards: u32,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[arg(long)]
    pub dist: String,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long = "a", allow_negative_numbers = true)]
    pub a: f64,
    #[arg(long = "N", value_delimiter = ',', required = true)]
    pub n: Vec<f64>,
    #[arg(long, value_enum, default_value = "P")]
    pub quantity: Quantity,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct QueueApproxArgs {
    #[arg(long)]
    pub dist: String,
    /// Service law: exp:<E>, det:<E> or pareto:<E>.
    #[arg(long)]
    pub service: String,
    #[arg(long = "N", value_delimiter = ',', required = true)]
    pub n: Vec<f64>,
    /// Level a above the mean load (comma-separated list allowed).
    #[arg(
        long = "a",
        value_delimiter = ',',
        required = true,
        allow_negative_numbers = true
    )]
    pub a: Vec<f64>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct QueueSimArgs {
    #[arg(long)]
    pub dist: String,
    #[arg(long)]
    pub service: String,
    /// Number of slots (comma-separated list allowed).
    #[arg(long = "N", value_delimiter = ',', required = true)]
    pub n: Vec<u64>,
    #[arg(
        long = "a",
        value_delimiter = ',',
        required = true,
        allow_negative_numbers = true
    )]
    pub a: Vec<f64>,
    #[arg(long, value_enum, default_value = "P")]
    pub quantity: Quantity,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct OmegaArgs {
    #[arg(long)]
    pub service: String,
    #[arg(long = "N")]
    pub n: u64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct StaffArgs {
    #[arg(long)]
    pub dist: String,
    /// Service laws, comma-separated (for example exp:0.5,det:1,pareto:0.5).
    #[arg(long, value_delimiter = ',', required = true)]
    pub service: Vec<String>,
    #[arg(long = "N")]
    pub n: u64,
    /// Targets in (0, 1), comma-separated.
    #[arg(
        long,
        value_delimiter = ',',
        required = true,
        allow_negative_numbers = true
    )]
    pub eps: Vec<f64>,
    /// Stopping tolerance on |Q̌ - eps|.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Monte Carlo runs used to audit each row; 0 disables the audit.
    #[arg(long, default_value_t = 0)]
    pub verify_runs: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub shards: u32,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ReproArgs {
    /// Run budget written into the simulation invocations.
    #[arg(long, default_value_t = 10_000_000)]
    pub runs: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub shards: u32,
    #[command(flatten)]
    pub out: OutputArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.message);
            ExitCode::from(e.code)
        }
    }
}
