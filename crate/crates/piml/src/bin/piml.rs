use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use piml::config::validate_config;
use piml::error::Error;
use piml::runner;

#[derive(Parser)]
#[command(name = "piml", version, about = "Physics-informed neural and graph network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and cross-check a config file.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Execute one experiment, writing artifacts to the output directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replace the config's seed.
        #[arg(long)]
        seed_override: Option<u64>,
        /// Cap concurrent subdomain workers; results are independent of it.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the config once per sweep value; writes sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the fast invariant suite.
    Check,
}

fn exit_for(e: &Error) -> ExitCode {
    match e {
        // Bad configuration is a validation error; anything else is a
        // runtime abort.
        Error::Config { .. } => ExitCode::from(1),
        _ => ExitCode::from(2),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { config } => validate_config(&config).map(|cfg| {
            println!("ok: {} ({} mode, seed {})", cfg.problem, cfg.mode, cfg.seed);
        }),
        Command::Run { config, out, seed_override, threads } => validate_config(&config)
            .and_then(|cfg| runner::run(&cfg, &out, seed_override, threads))
            .map(|summary| {
                println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            }),
        Command::Sweep { config, out, seed_override, threads } => validate_config(&config)
            .and_then(|cfg| runner::sweep(&cfg, &out, seed_override, threads))
            .map(|path| println!("wrote {}", path.display())),
        Command::Check => runner::check(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}
