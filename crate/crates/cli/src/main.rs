use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use starris::experiment::{run_to_dir, ExperimentKind};
use starris::scenario::ScenarioConfig;
use starris::Error;

/// Wideband STAR-RIS beamforming experiments.
#[derive(Debug, Parser)]
#[command(name = "starris", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a configuration file and print the resolved configuration.
    Validate {
        config: PathBuf,
    },
    /// Run one experiment and write its CSV, manifest and summary.
    Run {
        /// gain-bandwidth, gain-structure, convergence, td-sweep,
        /// bandwidth-sweep, power-sweep or csi-sweep.
        kind: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Override a configuration value, e.g. `system.pmax_w=10`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

/// Input problems exit with 2, failures while running with 1.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) | Error::InvalidGeometry(_) | Error::Parse(_) => 2,
        _ => 1,
    }
}

fn load(path: &PathBuf, overrides: &[String]) -> Result<ScenarioConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    let cfg = ScenarioConfig::from_toml_with_overrides(&text, overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = load(&config, &[])?;
            println!("{}: valid", config.display());
            print!("{}", cfg.to_toml_string());
        }
        Command::Run { kind, config, seed, out, overrides } => {
            let kind: ExperimentKind = kind.parse()?;
            let mut cfg = load(&config, &overrides)?;
            cfg.system.seed = seed;
            let result = run_to_dir(kind, &cfg, &out)?;
            print!("{}", result.summary);
            eprintln!("wrote {}", out.join(format!("{kind}.csv")).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
