mod config;
mod run;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand};

use config::RunConfig;
use run::Options;

#[derive(Parser)]
#[command(
    name = "abstain",
    version,
    about = "Classification with a bounded abstention rate: sweeps, rate studies, and dataset tooling"
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory for CSV, SVG, and report files.
    #[arg(long, global = true, value_name = "DIR", default_value = "abstain-out")]
    out: PathBuf,
    /// Added to every seed listed in the config.
    #[arg(long, global = true, value_name = "INT", default_value_t = 0)]
    seed_base: u64,
    /// Suppress progress lines; results and errors still print.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Run every configured algorithm over the (delta, seed) grid.
    Sweep,
    /// Median excess risk across sample sizes, with a fitted log-log slope.
    Rates,
    /// Score a saved model against a dataset or a problem sample.
    Eval,
    /// Write a sample from the configured problem as a LIBSVM file.
    Synth,
    /// Print the optimal threshold, edge probability, and risk per delta.
    Oracle,
}

fn dispatch(cli: &Cli) -> Result<()> {
    let config_path = cli.config.as_ref().ok_or_else(|| anyhow!("--config is required"))?;
    let config = RunConfig::load(config_path)?;
    let opts = Options { out: cli.out.clone(), seed_base: cli.seed_base, quiet: cli.quiet };
    match cli.verb {
        Verb::Sweep => run::cmd_sweep(&config, &opts),
        Verb::Rates => run::cmd_rates(&config, &opts),
        Verb::Eval => run::cmd_eval(&config, &opts),
        Verb::Synth => run::cmd_synth(&config, &opts),
        Verb::Oracle => run::cmd_oracle(&config, &opts),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
