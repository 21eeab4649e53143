use clap::{Parser, Subcommand};
use hamosc_cli::commands;
use std::path::PathBuf;

/// Oscillation analysis for extended linear matrix Hamiltonian systems:
/// Φ' = A(t)Φ + B(t)Ψ, Ψ' = C(t)Φ + [μ(t)I − A*(t)]Ψ.
#[derive(Parser)]
#[command(name = "hamosc", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration file (schema, expressions, structural rules).
    Validate {
        /// Configuration file (JSON).
        config: PathBuf,
        /// Write a JSON validation document here ('-' for stdout).
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Integrate the system and locate zeros of det Φ.
    Integrate {
        /// Configuration file (JSON).
        config: PathBuf,
        /// Integration horizon (overrides the config's integrator.T).
        #[arg(long = "T", allow_negative_numbers = true)]
        t_end: Option<f64>,
        /// Write the per-step trajectory table here.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write a JSON summary here ('-' for stdout).
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Evaluate oscillation criteria.
    Criteria {
        /// Configuration file (JSON).
        config: PathBuf,
        /// Which criterion: all, 1.1, 2.1, 3.1, 3.2 or 3.3.
        #[arg(long, default_value = "all")]
        theorem: String,
        /// Write the JSON report here ('-' for stdout).
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Evaluate all criteria and cross-check against direct integration.
    Compare {
        /// Configuration file (JSON).
        config: PathBuf,
        /// Write the JSON report here ('-' for stdout).
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Validate { config, json } => commands::cmd_validate(config, json),
        Command::Integrate {
            config,
            t_end,
            csv,
            json,
        } => commands::cmd_integrate(config, *t_end, csv, json),
        Command::Criteria {
            config,
            theorem,
            json,
        } => commands::cmd_criteria(config, theorem, json),
        Command::Compare { config, json } => commands::cmd_compare(config, json),
    };
    std::process::exit(code);
}
