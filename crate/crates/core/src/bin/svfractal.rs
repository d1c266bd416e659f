use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use svfractal::config::Config;
use svfractal::runner::{self, Command};

#[derive(Parser)]
#[command(
    name = "svfractal",
    version,
    about = "Set-valued alpha-fractal functions"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute the fractal function and write phi_alpha.csv and metadata.json
    Build(Io),
    /// Run every invariant check and write verification.json
    Verify(Io),
    /// Sample the invariant measure and write atoms.csv, measure.json, defect.json
    Chaos(Io),
    /// Write dimension bounds to dimension.json
    Dims(Io),
    /// Draw the graph band and measure atoms to graph.svg
    Render(Io),
}

#[derive(clap::Args)]
struct Io {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, io) = match cli.command {
        Cmd::Build(io) => (Command::Build, io),
        Cmd::Verify(io) => (Command::Verify, io),
        Cmd::Chaos(io) => (Command::Chaos, io),
        Cmd::Dims(io) => (Command::Dims, io),
        Cmd::Render(io) => (Command::Render, io),
    };
    if let Ok(v) = std::env::var("SVFRACTAL_THREADS") {
        let threads = match v.parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => {
                eprintln!("error: SVFRACTAL_THREADS must be a positive integer, got `{v}`");
                return ExitCode::from(2);
            }
        };
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .expect("global pool is configured once");
    }
    let result = Config::load(&io.config)
        .map_err(runner::RunError::from)
        .and_then(|config| runner::run(command, &config, &io.out));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
