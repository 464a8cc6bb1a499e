//! `shl`: simulate stationary half-plane slit-map aggregation and estimate
//! the laws of its fluctuation field.
//!
//! Exit codes: 0 success, 1 computational failure (including verify check
//! failures), 2 usage errors.

mod commands;
mod config;
mod output;
mod verify;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "shl", version, about = "Slit-map aggregation simulator and law estimator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command. Values omitted on the command line fall
/// back to `--config` file entries, then to per-command defaults.
#[derive(Args, Clone, Debug, Default)]
struct CommonOpts {
    /// Master seed; drawn from entropy and recorded when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Window half-width: a number, or "auto".
    #[arg(long)]
    window: Option<String>,
    /// Drift subtracted from tracked points: asymptotic | exact.
    #[arg(long)]
    drift_mode: Option<String>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (default out/<command>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML file with fallback values for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write per-sample records to samples.ndjson.
    #[arg(long)]
    dump_samples: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run kernel and quadrature self-checks; prints PASS/FAIL per check.
    Verify {
        #[command(flatten)]
        common: CommonOpts,
        /// Relative tolerance for the quadrature checks.
        #[arg(long)]
        rel_tol: Option<f64>,
        /// Quadrature truncation half-width.
        #[arg(long)]
        half_width: Option<f64>,
        /// Negative control: evaluate the branch checks with a deliberately
        /// wrong branch. Must fail.
        #[arg(long, hide = true)]
        inject_branch_flip: bool,
    },
    /// Mean squared fluctuation over horizons, with a log-slope fit.
    Variance {
        #[command(flatten)]
        common: CommonOpts,
        /// Comma-separated horizons, e.g. 8,16,32,64.
        #[arg(long)]
        t: Option<String>,
    },
    /// Spatial covariance of the field at offsets b, on common randomness.
    Covariance {
        #[command(flatten)]
        common: CommonOpts,
        /// Horizon.
        #[arg(long)]
        t: Option<f64>,
        /// Comma-separated offsets, e.g. 2,8,32.
        #[arg(long)]
        b: Option<String>,
    },
    /// Grid maximum of Im M_t over [0, t] and exceedance probabilities.
    Maxfluct {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        t: Option<String>,
        #[arg(long)]
        grid_spacing: Option<f64>,
        /// Height above the real axis at which the grid is tracked.
        #[arg(long)]
        height: Option<f64>,
        /// Exceedance threshold multiplier: P(max > beta ln t).
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Exponential moment of Im M_t(0) against its analytic bound.
    Expmoment {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        t: Option<String>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Tail threshold multiplier: P(Im M > beta ln t).
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Lower-deviation probability of the growth law.
    Lln {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        t: Option<String>,
        /// Deviation in units of sqrt(t): P(Im F < pi t/2 - a sqrt t).
        #[arg(long)]
        a: Option<f64>,
    },
    /// Second moment of the map derivative at height ln t.
    Derivmoment {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        t: Option<String>,
    },
    /// Mean-square fluctuation gap between coupled windows.
    Truncation {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        m_small: Option<f64>,
        #[arg(long)]
        m_large: Option<f64>,
    },
    /// Histograms of Re/Im M_t(0) with jackknifed skewness.
    Histogram {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Forward aggregate polyline as SVG + CSV.
    Render {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        t: Option<f64>,
        /// Grid as lo:hi:step, e.g. -20:20:0.25.
        #[arg(long)]
        grid: Option<String>,
        /// Also render the fluctuation profile x -> Im M_t(x).
        #[arg(long)]
        fluctuation: bool,
    },
}

/// Usage problems exit 2; computational failures exit 1.
pub enum RunError {
    Usage(String),
    Failed(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for RunError {
    fn from(e: E) -> Self {
        RunError::Failed(e.into())
    }
}

pub fn usage(msg: impl Into<String>) -> RunError {
    RunError::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli.command) {
        Ok(code) => code,
        Err(RunError::Usage(msg)) => {
            eprintln!("usage error: {msg}\nrun `shl --help` for details");
            ExitCode::from(2)
        }
        Err(RunError::Failed(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
