//! `ema-market`: equilibria, take rates, policy levers and oracle checks for
//! the online adulteration game.

mod commands;
mod config;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ema_market::sweep::TakeRateSpec;

use crate::config::{parse_axis, parse_number};
use crate::output::{CliError, EXIT_OK, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "ema-market", version, about = "Equilibria and policy levers of the online adulteration game")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON config file; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write output here instead of stdout
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// RNG seed (oracle simulation, dataset generation)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Exit 1 when a modelling assumption fails instead of only reporting it
    #[arg(long, global = true)]
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Seller equilibrium at one take rate
    Solve(MarketArgs),
    /// Grid over theta, t, take rate and curve, one CSV row per point
    Sweep(SweepArgs),
    /// Closed-form optimal take rate
    OptimizeTakeRate {
        #[command(flatten)]
        market: MarketArgs,
        /// Also run the grid-search oracle
        #[arg(long)]
        check: bool,
    },
    /// Administrative penalty, penalty escalation and traceability
    Policy {
        #[command(subcommand)]
        lever: PolicyCommand,
    },
    /// Build a market from a seller price/volume CSV
    Calibrate(CalibrateArgs),
    /// Run the brute-force oracles against the closed forms
    Verify(VerifyArgs),
    /// Write the seeded synthetic seller dataset
    GenDataset(GenArgs),
}

#[derive(Debug, Subcommand)]
pub enum PolicyCommand {
    /// Minimal administrative penalty that deters cover-ups
    Ap(ApArgs),
    /// Whether promising a higher penalty pays
    Escalate(MarketArgs),
    /// Traceability verdict and usage-fee band
    Trace(TraceArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct MarketArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub take_rate_cap: Option<f64>,
    #[arg(long)]
    pub v0: Option<f64>,
    /// Curve coefficient `a`; accepts fractions like 1/15
    #[arg(long, value_parser = parse_number)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    /// Take rate, or `optimal`
    #[arg(long, visible_alias = "take-rate")]
    pub vartheta: Option<TakeRateSpec>,
    #[arg(long)]
    pub quality_seed: Option<u64>,
    /// Seller CSV or `bundled`; calibrates n, gamma, rho and qualities
    #[arg(long)]
    pub dataset: Option<String>,
}

/// Values of one sweep axis.
#[derive(Debug, Clone)]
pub struct Axis(pub Vec<f64>);

fn axis_arg(s: &str) -> Result<Axis, String> {
    parse_axis(s).map(Axis)
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    /// lo:hi:step or a comma list
    #[arg(long, value_parser = axis_arg)]
    pub sweep_theta: Option<Axis>,
    #[arg(long, value_parser = axis_arg)]
    pub sweep_t: Option<Axis>,
    #[arg(long, value_parser = axis_arg)]
    pub sweep_vartheta: Option<Axis>,
    #[arg(long, value_parser = axis_arg)]
    pub sweep_a: Option<Axis>,
    /// Curve family as a list of `a` values sharing `b`, e.g. 1/5,1/10,1/15
    #[arg(long, value_parser = axis_arg)]
    pub curves: Option<Axis>,
    /// Keep `rho` fixed across curves
    #[arg(long)]
    pub fix_rho: bool,
    #[arg(long)]
    pub c_e: Option<f64>,
    #[arg(long)]
    pub c_s: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ApArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    #[arg(long)]
    pub t_e: Option<f64>,
    /// Administration inspections; `large` takes all remaining `n - t_e`
    #[arg(long)]
    pub t_a: Option<String>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    #[arg(long)]
    pub c_e: Option<f64>,
    #[arg(long)]
    pub c_s: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Seller CSV (`seller_id,price,volume`) or `bundled`
    pub input: Option<String>,
    #[arg(long)]
    pub volume_threshold: Option<u64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub take_rate_cap: Option<f64>,
    #[arg(long, value_parser = parse_number)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    /// Replace the solved dosage with this value in the dosage oracle
    #[arg(long)]
    pub inject_dosage: Option<f64>,
    #[arg(long)]
    pub mc_draws: Option<usize>,
    #[arg(long)]
    pub dosage_grid_points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub sellers: Option<usize>,
    #[arg(long)]
    pub active: Option<usize>,
    #[arg(long)]
    pub max_volume: Option<u64>,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return EXIT_OK;
            }
            let err = CliError::usage(e.render().to_string().trim());
            eprintln!("{}", err.to_json());
            return EXIT_USAGE;
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("{}", err.to_json());
            err.exit_code()
        }
    }
}
