use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::LevelFilter;

use gaugeframe::run::{run_cli, Overrides};

/// Runs a gauge-reduction scenario described by a TOML file.
#[derive(Debug, Parser)]
#[command(name = "gaugeframe", version)]
struct Cli {
    /// Scenario file.
    config: PathBuf,
    /// Tolerance applied to every verification check.
    #[arg(long)]
    tol: Option<f64>,
    /// Directory for the artifacts; overrides `run.output`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Command to run instead of `run.command`.
    #[arg(long)]
    command: Option<String>,
}

fn log_level() -> LevelFilter {
    match std::env::var("GAUGEFRAME_LOG").as_deref() {
        Ok("quiet") => LevelFilter::Off,
        Ok("debug") => LevelFilter::Debug,
        Ok("info") | Err(_) => LevelFilter::Info,
        Ok(other) => {
            eprintln!("warning: GAUGEFRAME_LOG={other} not recognised, using info");
            LevelFilter::Info
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::new()
        .filter_level(log_level())
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let code = run_cli(
        &cli.config,
        &Overrides {
            tol: cli.tol,
            output: cli.output,
            command: cli.command,
        },
    );
    ExitCode::from(code as u8)
}
