mod args;
mod commands;
mod config;
mod table;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, OutputArgs};
use commands::{Failure, Outcome, EXIT_DOMAIN, EXIT_IO, EXIT_MONTE_CARLO};
use config::{merge_config, ConfigError};

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("RANLASE_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::new(EXIT_DOMAIN, format!("RANLASE_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::new(EXIT_DOMAIN, format!("cannot start {n} worker threads: {e}")))
}

fn write_outcome(outcome: &Outcome, out: &OutputArgs) -> Result<(), Failure> {
    let io_fail = |e: io::Error| {
        let target = out.output.as_ref().map_or("standard output".to_string(), |p| p.display().to_string());
        Failure::new(EXIT_IO, format!("cannot write {target}: {e}"))
    };
    match &out.output {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path).map_err(io_fail)?);
            outcome.table.write(&mut w, out.format).map_err(io_fail)?;
            w.flush().map_err(io_fail)
        }
        None => {
            let mut w = io::stdout().lock();
            outcome.table.write(&mut w, out.format).map_err(io_fail)?;
            w.flush().map_err(io_fail)
        }
    }
}

fn run() -> Result<(), Failure> {
    let argv = merge_config(std::env::args_os().collect()).map_err(|e| match e {
        ConfigError::Invalid(m) => Failure::new(EXIT_DOMAIN, m),
        ConfigError::Io(m) => Failure::new(EXIT_IO, m),
    })?;
    let cli = Cli::try_parse_from(argv).unwrap_or_else(|e| e.exit());
    init_threads()?;
    let (outcome, out) = match &cli.command {
        Command::Density(a) => (commands::density(a)?, &a.output),
        Command::Stats(a) => (commands::stats(a)?, &a.output),
        Command::Pmf(a) => (commands::pmf(a)?, &a.output),
        Command::Montecarlo(a) => (commands::montecarlo(a)?, &a.output),
    };
    write_outcome(&outcome, out)?;
    match outcome.failed {
        Some(reason) => Err(Failure::new(EXIT_MONTE_CARLO, format!("monte carlo check failed: {reason}"))),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
