//! Batch front end: config ingestion, command dispatch and artifact emission.

pub mod commands;
pub mod config;
pub mod emit;
pub mod error;

use std::path::{Path, PathBuf};

use clap::Parser;

pub use commands::{run, Assertion, Outcome, Summary};
pub use config::{Command, RunConfig};
pub use error::CliError;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "maghelm", version, about = "Numerical lab for the magnetic Helmholtz equation")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, env = "MAGHELM_THREADS")]
    pub threads: Option<usize>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Writes every artifact of a run into `dir`.
pub fn write_outcome(outcome: &Outcome, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    for (name, bytes) in &outcome.files {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<(Outcome, PathBuf), CliError> {
    let config = RunConfig::load(&cli.config)?.resolve(cli.command, cli.seed)?;
    let dir = cli.out.clone().or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("maghelm-out"));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| run(&config))?;
    write_outcome(&outcome, &dir)?;
    Ok((outcome, dir))
}

/// Runs the parsed command line and returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    match execute(&cli) {
        Ok((outcome, dir)) => match outcome.summary.first_failure() {
            None => {
                eprintln!("{}: passed, artifacts in {}", cli.command.as_str(), dir.display());
                EXIT_PASS
            }
            Some(a) => {
                eprintln!("{}: assertion `{}` failed: {}", cli.command.as_str(), a.name, a.detail);
                EXIT_ASSERTION
            }
        },
        Err(e) => {
            eprintln!("maghelm: {e}");
            EXIT_CONFIG
        }
    }
}
