//! `afmech`: assignment flows, their Lagrangian mechanics, and metric data
//! labeling from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::CliError;

#[derive(Parser)]
#[command(
    name = "afmech",
    version,
    about = "Coupled replicator dynamics: labeling runs, flow traces, critical-set analysis and verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Problem configuration (JSON document).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (the AFMECH_OUT environment variable takes
    /// precedence).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed override; replaces the seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Dotted-path config override, repeatable: --set integrator.h=0.01
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    /// Worker threads for independent verification checks.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dataset, run the S-flow and write labels + diagnostics.
    Label,
    /// Run a verification suite (lemmas, theorem31, counterexample, mane,
    /// jacobi, energy, all).
    Verify {
        #[arg(default_value = "all")]
        suite: String,
    },
    /// Integrate the configured flow and emit per-sample diagnostics.
    Trace,
    /// Analyze the critical set of the configured averaging matrix.
    Mane,
}

fn out_dir(cli: &Cli) -> Option<PathBuf> {
    std::env::var_os("AFMECH_OUT").map(PathBuf::from).or_else(|| cli.out.clone())
}

fn required_out(cli: &Cli) -> PathBuf {
    out_dir(cli).unwrap_or_else(|| PathBuf::from("out"))
}

fn load(cli: &Cli) -> Result<config::LoadedConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required for this command".into()))?;
    config::load_config(path, &cli.sets, cli.seed)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Label => commands::cmd_label(&load(cli)?, &required_out(cli)),
        Command::Trace => commands::cmd_trace(&load(cli)?, &required_out(cli)),
        Command::Mane => commands::cmd_mane(&load(cli)?, &required_out(cli)),
        Command::Verify { suite } => {
            // The verify suites are self-contained; a config only contributes
            // its seed and hash when present.
            let (seed, hash) = match (&cli.config, cli.seed) {
                (Some(_), _) => {
                    let loaded = load(cli)?;
                    (loaded.config.problem.seed, Some(loaded.hash))
                }
                (None, seed) => (seed.unwrap_or(0), None),
            };
            commands::cmd_verify(suite, seed, cli.threads, out_dir(cli).as_deref(), hash)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
