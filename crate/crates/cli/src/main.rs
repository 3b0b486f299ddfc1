//! Batch front-end: `skspin run <config>`, `skspin validate <config>`,
//! `skspin version`.
// `!(x > 0.0)` is how NaN gets rejected throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod error;
mod output;
mod tasks;

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::Experiment;
use crate::error::CliError;

/// Thread count override for the rayon pool.
const THREADS_ENV: &str = "SKSPIN_THREADS";

#[derive(Parser)]
#[command(
    name = "skspin",
    version,
    about = "Real-time spin correlators from the Schwinger-Keldysh coherent-state path integral"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the task described by a config file.
    Run {
        config: PathBuf,
        /// Overrides `output.path`; `-` writes to stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
    /// Print the version.
    Version,
}

fn load(path: &Path) -> Result<Experiment, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    config::validate(config::parse(&text)?)
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().map_err(|_| {
            CliError::validation(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::validation(e.to_string()))?;
    }
    Ok(())
}

fn run(config: &Path, output: Option<PathBuf>) -> Result<(), CliError> {
    configure_threads()?;
    let exp = load(config)?;
    let artifact = tasks::run(&exp)?;
    let target = output.or_else(|| exp.config.output.path.clone());
    let format = exp.config.output.format;
    match target {
        Some(p) if p.as_os_str() != "-" => {
            let file =
                fs::File::create(&p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
            let mut w = BufWriter::new(file);
            output::write(&mut w, format, &exp, &artifact)?;
            w.flush()?;
        }
        _ => {
            let stdout = io::stdout();
            output::write(stdout.lock(), format, &exp, &artifact)?;
        }
    }
    if artifact.sign_collapsed() {
        eprintln!(
            "{}",
            json!({
                "warning": "sign_collapse",
                "message": "average sign is below three standard errors; estimates are unreliable",
                "avg_sign": artifact.diagnostics.get("avg_sign"),
            })
        );
    }
    Ok(())
}

fn validate(config: &Path) -> Result<(), CliError> {
    let exp = load(config)?;
    println!(
        "ok: task {} on {} sites, spec_sha256 {}",
        exp.config.task.name(),
        exp.spec.sites(),
        output::spec_hash_hex(&exp)
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, output } => run(&config, output),
        Command::Validate { config } => validate(&config),
        Command::Version => {
            println!("{}", output::GENERATOR);
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
