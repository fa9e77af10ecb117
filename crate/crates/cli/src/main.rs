use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tomokit_cli::{describe_geometry, load, run_with_threads, CliError, FORMATS};

#[derive(Parser)]
#[command(name = "recon", version, about = "Run declarative tomographic reconstruction pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a pipeline config.
    Run {
        config: PathBuf,
        /// Override a config leaf by dotted path, e.g. recon.alpha=0.05
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Noise seed; overrides the config's `seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the acquisition geometry a config declares.
    Geom {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// List supported file formats.
    Formats,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, overrides, threads, seed } => {
            let config = load(&config, &overrides)?;
            let threads = threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            if threads == 0 {
                return Err(CliError::config("--threads must be at least 1"));
            }
            let seed = seed.unwrap_or(config.seed);
            run_with_threads(&config, seed, threads, &mut std::io::stdout())?;
        }
        Command::Geom { config, overrides } => {
            print!("{}", describe_geometry(&load(&config, &overrides)?)?);
        }
        Command::Formats => print!("{FORMATS}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("recon: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
