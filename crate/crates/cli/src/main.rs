use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};

use dpn_cli::inject::read_requests;
use dpn_cli::{execute, preset, write_outputs, OutputFormat, Scenario, PRESETS};

#[derive(Parser)]
#[command(name = "dpn", version, about = "Digital power network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or a config file and write its artifacts.
    Run(RunArgs),
    /// List the built-in presets.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// Grid config file (TOML, or JSON with a .json extension).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// One line per round, comma-separated request per user.
    #[arg(long)]
    inject_requests: Option<PathBuf>,
    /// csv, json or dot.
    #[arg(long)]
    format: Option<OutputFormat>,
}

fn run(args: RunArgs) -> Result<()> {
    let mut scenario = match (&args.preset, &args.config) {
        (Some(name), _) => preset(name).ok_or_else(|| {
            let names: Vec<_> = PRESETS.iter().map(|p| p.name).collect();
            anyhow!("unknown preset `{name}` (available: {})", names.join(", "))
        })?,
        (None, Some(path)) => Scenario::from_config_file(path)?,
        (None, None) => unreachable!("clap requires --preset or --config"),
    };
    if let Some(seed) = args.seed {
        scenario = scenario.with_seed(seed);
    }
    if let Some(path) = &args.inject_requests {
        scenario = scenario.with_injected(read_requests(path)?)?;
    }
    let outcome = execute(&scenario)?;
    for path in write_outputs(&scenario, &outcome, &args.out, args.format)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Presets => {
            for p in &PRESETS {
                println!("{:<18} {}", p.name, p.about);
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
