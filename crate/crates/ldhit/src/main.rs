use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ldhit::{CliError, Command, Context, RunConfig};

/// Large-deviation asymptotics for a random walk hitting a remote orthant.
#[derive(Parser)]
#[command(name = "ldhit", version)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "LDHIT_THREADS")]
    threads: Option<usize>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Tabulate Λ, λ(α), D and the dual optimiser at the configured points.
    Rates,
    /// Most probable time and point of G, with the vertex condition flags.
    Mpp,
    /// Importance-sampling estimates over the s grid.
    Simulate,
    /// Fit and estimate the constant A, with prediction and ratio tables.
    Asym,
    /// Simultaneous ruin probability for a Sparre Andersen model.
    Ruin,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: &Cli) -> Result<String, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let config = RunConfig::from_path(path)?;
    let cmd = match cli.cmd {
        Cmd::Rates => Command::Rates,
        Cmd::Mpp => Command::Mpp,
        Cmd::Simulate => Command::Simulate,
        Cmd::Asym => Command::Asym,
        Cmd::Ruin => Command::Ruin,
    };
    let ctx = Context::new(config, cli.seed, cli.threads, cli.out.clone());
    ldhit::run(cmd, &ctx)
}
