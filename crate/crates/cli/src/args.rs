use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use stochbs_core::{OptionKind, Scheme};

use crate::config::{PricerChoice, SurfaceMode};

#[derive(Debug, Parser)]
#[command(
    name = "stochbs",
    version,
    about = "Extended Black-Scholes option pricer"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Print a machine-readable JSON record.
    #[arg(long, global = true)]
    pub json: bool,
    #[arg(long, global = true, value_name = "INT")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// PDE price at (S0, sigma0, r0).
    Price(PriceArgs),
    /// Export plot data: full surface, strike sweep or S/t sweep.
    Surface(SurfaceArgs),
    /// Monte Carlo price, path dump, PDE cross-check or synthetic data.
    Simulate(SimulateArgs),
    /// Price a quote history and report the errors.
    Backtest(BacktestArgs),
    /// PDE report next to an external model's predictions.
    Compare(CompareArgs),
}

/// Overrides for the contract, market state, grid and dynamics.
#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    #[arg(long)]
    pub kind: Option<OptionKind>,
    #[arg(long)]
    pub strike: Option<f64>,
    /// Years.
    #[arg(long)]
    pub maturity: Option<f64>,
    #[arg(long)]
    pub s0: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub r0: Option<f64>,
    #[arg(long)]
    pub s_max: Option<f64>,
    #[arg(long)]
    pub n_s: Option<usize>,
    #[arg(long)]
    pub n_t: Option<usize>,
    #[arg(long)]
    pub n_sigma: Option<usize>,
    #[arg(long)]
    pub n_r: Option<usize>,
    #[arg(long)]
    pub scheme: Option<Scheme>,
    /// Raise n_t to the explicit stability limit.
    #[arg(long)]
    pub auto_steps: bool,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub xi: Option<f64>,
    /// Vasicek mean-reversion speed a.
    #[arg(long)]
    pub rate_speed: Option<f64>,
    /// Vasicek long-run rate b.
    #[arg(long)]
    pub rate_mean: Option<f64>,
    /// Vasicek rate volatility s.
    #[arg(long)]
    pub rate_vol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PriceArgs {
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub mode: Option<SurfaceMode>,
    #[arg(long)]
    pub k_min: Option<f64>,
    #[arg(long)]
    pub k_max: Option<f64>,
    #[arg(long)]
    pub k_step: Option<f64>,
    #[arg(long)]
    pub snapshot_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub n_paths: Option<usize>,
    /// Time steps per path.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Compare the Monte Carlo price with the PDE price.
    #[arg(long)]
    pub vs_pde: bool,
    /// Write a synthetic prices.csv and quotes.csv into this directory.
    #[arg(long, value_name = "DIR")]
    pub fixture: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Daily closes, `date,close`.
    #[arg(long, value_name = "PATH")]
    pub prices: Option<PathBuf>,
    /// Option quotes CSV.
    #[arg(long, value_name = "PATH")]
    pub quotes: Option<PathBuf>,
    /// Trading days in the volatility window.
    #[arg(long)]
    pub vol_window: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub pricer: Option<PricerChoice>,
    /// Also write the per-quote features CSV.
    #[arg(long, value_name = "PATH")]
    pub features: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// `quote_id,predicted_price`; the PDE report is still produced without it.
    #[arg(long, value_name = "PATH")]
    pub predictions: Option<PathBuf>,
}
