use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use disagg_core::Error;

mod commands;

#[derive(Debug, Parser)]
#[command(name = "disagg", version, about = "Bayesian disaggregation of aggregated functional data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a synthetic dataset from a preset or a scenario file.
    Simulate(SimulateArgs),
    /// Run the sampler and write draws, diagnostics and summaries.
    Fit(RunArgs),
    /// Posterior predictive bands for one curve from stored draws.
    Predict(RunArgs),
    /// Posterior mean curves and 95% bands from stored draws.
    Summarize(RunArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scenario JSON (used when no preset is given).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the sampler seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the number of chains in the config.
    #[arg(long)]
    chains: Option<usize>,
    /// Overrides the preset named in the config.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory; defaults to the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var("DISAGG_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("DISAGG_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return ExitCode::from(2);
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Simulate(a) => commands::simulate(a.config.as_deref(), a.preset.as_deref(), a.seed, &a.out),
        Command::Fit(a) => commands::fit(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Summarize(a) => commands::summarize(&a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
