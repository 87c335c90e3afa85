use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use selfimaging_opo::app::{self, RunOptions, Subcommand};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Design,
    Spectrum,
    Modes,
    Homodyne,
    ReproducePaper,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Design => Subcommand::Design,
            Command::Spectrum => Subcommand::Spectrum,
            Command::Modes => Subcommand::Modes,
            Command::Homodyne => Subcommand::Homodyne,
            Command::ReproducePaper => Subcommand::ReproducePaper,
        }
    }
}

/// Self-imaging OPO multimode squeezing simulator.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML configuration; the built-in reference configuration when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: `output.directory` or `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Homodyne Monte Carlo seed.
    #[arg(long)]
    seed: Option<u64>,
    /// HG truncation order per axis.
    #[arg(long)]
    truncation: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = RunOptions {
        out_dir: cli.out,
        seed: cli.seed,
        truncation: cli.truncation,
        quiet: cli.quiet,
    };
    let result = app::load(cli.config.as_deref()).and_then(|loaded| {
        for w in &loaded.warnings {
            eprintln!("warning: {w}");
        }
        app::run(cli.command.into(), &loaded.config, &opts)
    });
    match result {
        Ok(outcome) => {
            if outcome.failures > 0 {
                eprintln!(
                    "error kind=reproduction exit={} message=\"{} check(s) failed\"",
                    outcome.exit_code, outcome.failures
                );
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("{}", app::error_record(&e));
            ExitCode::from(app::exit_code(&e) as u8)
        }
    }
}
