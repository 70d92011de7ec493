use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracpinn_cli::config::{ConfigError, ExperimentConfig, Origin};
use fracpinn_cli::experiment;

#[derive(Parser)]
#[command(name = "fracpinn", version, about = "Physics-informed solvers for fractional PDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Run this single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides experiment.out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// `section.key=value`, applied after the file; may repeat.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn main() -> ExitCode {
    let Command::Run {
        config,
        seed,
        out,
        overrides,
    } = Cli::parse().command;
    let text = match std::fs::read_to_string(&config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config.display());
            return ExitCode::from(2);
        }
    };
    let mut all = overrides;
    if let Some(s) = seed {
        all.push(format!("experiment.seeds={s}"));
    }
    if let Some(o) = out {
        all.push(format!("experiment.out={}", o.display()));
    }
    let cfg = match ExperimentConfig::from_text(&text, &all) {
        Ok(c) => c,
        Err(e) => {
            report_config_error(&config, &e);
            return ExitCode::from(2);
        }
    };
    let mut log = std::io::stderr();
    match experiment::run(&cfg, &mut log) {
        Ok(summary) => {
            print!("{}", summary.table());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn report_config_error(path: &std::path::Path, e: &ConfigError) {
    match e.origin {
        Origin::Line(_) => eprintln!("error: {}: {e}", path.display()),
        _ => eprintln!("error: {e}"),
    }
}
