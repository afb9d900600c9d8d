mod artifacts;
mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use artifacts::OutDir;
use config::{Overrides, RunConfig};
use error::CliError;

/// Chemical-space profiling and ML benchmarks for terpene descriptor exports.
#[derive(Debug, Parser)]
#[command(name = "terpscape", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and cleanse the export into the canonical dataset.
    Ingest(Args),
    /// Descriptor distributions and Lipinski profile per subclass.
    Profile(Args),
    /// Clustering benchmark grid.
    Cluster(Args),
    /// Cross-validated classifier comparison with a held-out test split.
    Classify(Args),
    /// Merge all artifacts into one bundle and a text summary.
    Report(Args),
}

#[derive(Debug, clap::Args)]
struct Args {
    /// TOML or JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Source export; overrides `input` in the config.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed; overrides the config and TERPSCAPE_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
}

type Handler = fn(&RunConfig, &OutDir) -> Result<(), CliError>;

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, args, f): (&str, Args, Handler) = match cli.command {
        Command::Ingest(a) => ("ingest", a, commands::ingest),
        Command::Profile(a) => ("profile", a, commands::profile),
        Command::Cluster(a) => ("cluster", a, commands::cluster),
        Command::Classify(a) => ("classify", a, commands::classify),
        Command::Report(a) => ("report", a, commands::report),
    };
    let cfg = RunConfig::load(
        &args.config,
        Overrides {
            input: args.input,
            out: args.out,
            seed: args.seed,
            workers: args.workers,
        },
    )?;
    if name == "ingest" {
        cfg.input()?;
    }
    if let Some(n) = cfg.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {n} workers: {e}")))?;
    }
    let out = OutDir::acquire(&cfg.out)?;
    let start = Instant::now();
    let result = f(&cfg, &out);
    out.log_timing(name, "total", start.elapsed().as_secs_f64());
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
