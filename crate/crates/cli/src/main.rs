mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{RunConfig, UsageError};

const COLUMNS: &str = "\
Output columns (prices are per unit notional; VIX in volatility units, 0.2 = 20 VIX points; times in years):
  vix_futures.csv   T, lower_bound, upper_bound, mc_hsfe, mc_hsfe_se, mc_cholesky, mc_cholesky_se,
                    lognormal_exact, lognormal_bfg
  vix_options.csv   T, strike, mc_cholesky, mc_cholesky_se, lognormal_exact, lognormal_bfg
  smile.csv         maturity_years, strike (S0 = 1), call_price, std_error, implied_vol (annualised, empty if not invertible)
  varswap.csv       maturity_years, total_variance, variance (annualised), xi0 (annualised)
  *.json            fitted surfaces, curves and calibration reports

Exit status: 0 on success, 1 if a stage or an arbitrage check fails, 2 on usage or configuration errors.";

#[derive(Debug, Parser)]
#[command(name = "roughvol", version, about = "Rough Bergomi pricing and calibration", after_help = COLUMNS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Random seed; overrides the config.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads; overrides the config.
    #[arg(long, global = true, value_name = "N", env = "ROUGHVOL_THREADS")]
    threads: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Last calibration stage to run: essvi, xi0, futures or spx.
    #[arg(long, global = true, value_name = "NAME")]
    stage: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// VIX futures: bounds, Monte Carlo and log-normal approximations.
    VixFutures,
    /// VIX calls: Monte Carlo and log-normal approximations.
    VixOptions,
    /// Staged calibration: eSSVI fit, forward variance, (H, nu) from VIX futures, (nu, rho) from SPX calls.
    Calibrate,
    /// SPX call prices and implied volatilities by Monte Carlo.
    Smile,
    /// Fit an eSSVI surface to option quotes.
    EssviFit,
    /// Variance-swap strikes and forward variances from an eSSVI surface.
    Varswap,
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let mut cfg = RunConfig::load(cli.config.as_deref()).map_err(|e| UsageError(format!("{e:#}")))?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(o) = cli.out {
        cfg.out = Some(o);
    }
    if let Some(s) = cli.stage {
        cfg.stage = Some(s);
    }
    cfg.validate().map_err(|e| UsageError(format!("{e:#}")))?;
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(UsageError("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let out = io::OutDir::create(cfg.out.clone().unwrap_or_else(|| PathBuf::from(".")))?;
    match cli.command {
        Command::VixFutures => commands::vix_futures(&cfg, &out),
        Command::VixOptions => commands::vix_options(&cfg, &out),
        Command::Calibrate => commands::calibrate(&cfg, &out),
        Command::Smile => commands::smile(&cfg, &out),
        Command::EssviFit => commands::essvi_fit(&cfg, &out),
        Command::Varswap => commands::varswap(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
