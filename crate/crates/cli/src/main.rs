//! `gvp`: simulate data, fit Gibbs posteriors, run expanding-window
//! evaluations and produce interval forecasts.
//!
//! Exit status: 0 when every cell succeeded, 2 when some cells failed but
//! results were written, 1 on a hard error.

mod commands;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "gvp", version, about = "Gibbs variational prediction experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "gvp-out")]
    pub out: PathBuf,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Posterior engine: vb, mcmc or both.
    #[arg(long, global = true)]
    pub engine: Option<String>,
    /// Worker threads for independent cells.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Experiment scale for presets: paper or desk.
    #[arg(long, global = true, default_value = "desk")]
    pub scale: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a series from the configured DGP.
    Simulate {
        /// DGP name, overriding the configuration
        /// (garch-gaussian, sv-leverage, sv-smooth-transition, lstar-t, dyn-regression).
        #[arg(long)]
        dgp: Option<String>,
        /// Number of observations T (one presample value is added).
        #[arg(long)]
        t: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
    },
    /// Calibrate the posterior of one update rule on a series.
    Fit {
        /// Series CSV; simulated from the configuration when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Update rule label (LS, CRPS, CLS10, CLS90, MSIS, ...).
        #[arg(long, default_value = "LS")]
        rule: String,
        /// Fit on y_1..y_n (default: every observation).
        #[arg(long)]
        n: Option<usize>,
    },
    /// One-step-ahead predictive from a previous fit.
    Predict {
        /// Fit artifact written by `fit`.
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Predict y_{n+1} (default: the fitted n).
        #[arg(long)]
        n: Option<usize>,
        /// Draws averaged into the predictive.
        #[arg(long)]
        m: Option<usize>,
    },
    /// Expanding-window evaluation of the configured experiment.
    Evaluate {
        /// Evaluate on this series instead of simulating one.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run a built-in experiment.
    Replicate {
        /// toy-garch, lstar-mixture or bnn-models.
        target: String,
    },
    /// Interval forecast for the next value of a level series.
    Pipeline {
        #[arg(long)]
        data: PathBuf,
        /// Column holding the series.
        #[arg(long, default_value = "y")]
        column: String,
        /// Differencing order.
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Mixture components.
        #[arg(long)]
        k: Option<usize>,
        /// Hold back the last observation and score the interval on it.
        #[arg(long)]
        holdout: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(commands::Outcome::Complete) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Partial(n)) => {
            eprintln!("warning: {n} cell(s) failed; partial results written");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
