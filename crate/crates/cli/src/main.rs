use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stalker_sim::config::{load, process_env};
use stalker_sim::{run_file, Error, Overrides};

#[derive(Parser)]
#[command(name = "stalker-sim", version, about = "Run stalker-process and opinion-game experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its manifest and CSV files.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config and print the fully resolved settings.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            threads,
            out,
        } => {
            let overrides = Overrides {
                seed,
                threads,
                output_dir: out,
            };
            run_file(&config, &overrides).map(|files| {
                for f in files {
                    println!("{}", f.display());
                }
            })
        }
        Command::Validate { config } => std::fs::read_to_string(&config)
            .map_err(|source| Error::Run(stalker_sim::RunError::Io { path: config, source }))
            .and_then(|text| Ok(load(&text, process_env, &Overrides::default())?))
            .map(|cfg| print!("{}", cfg.manifest())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
