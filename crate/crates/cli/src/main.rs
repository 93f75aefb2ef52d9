//! `rcm`: spectra, dissipation measures, dynamics and synthetic fields of the
//! tree dyadic model, written as plot-ready CSV or JSON.

mod commands;
mod config;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use rcm_core::RcmError;

use commands::*;
use output::{model_hash, render, Format, Header};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] RcmError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                RcmError::NonFinite(_) | RcmError::Unstable(_) => 1,
                _ => 2,
            },
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rcm", version, about)]
struct Cli {
    /// JSON object of option values; flags given on the command line win
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (default stdout)
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Output format
    #[arg(long, value_enum, global = true)]
    format: Option<Format>,
    /// Random seed (default 0)
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// ζ_p curves of RCM models and the reference models
    Spectra(SpectraArgs),
    /// Constant solution: q, regularity thresholds, norms, pull-back
    Solve(SolveArgs),
    /// Dissipation measure μ_n on the composition lattice
    Dissipation(DissipationArgs),
    /// Mass of μ_n near φ(3/2) as n grows
    Concentration(ConcentrationArgs),
    /// Integrate the truncated dynamics
    Simulate(SimulateArgs),
    /// Structure-function exponents of the synthesized field
    Structure(StructureArgs),
    /// Law of large numbers along random paths
    Lln(LlnArgs),
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Ok(n) = std::env::var("RCM_THREADS") {
        let n: usize = n
            .parse()
            .map_err(|_| CliError::Config(format!("RCM_THREADS must be a positive integer, got '{n}'")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let cfg = cli.config.as_deref();
    macro_rules! dispatch {
        ($args:expr, $name:literal, |$a:ident, $seed:ident| $body:expr) => {{
            let ($a, mut echo) = config::merge($args, cfg)?;
            let $seed = match (cli.seed, echo.get("seed")) {
                (Some(s), _) => s,
                (None, Some(v)) => v
                    .as_u64()
                    .ok_or_else(|| CliError::Config("seed must be a non-negative integer".into()))?,
                (None, None) => 0,
            };
            let format = match (cli.format, echo.get("format")) {
                (Some(f), _) => f,
                (None, Some(v)) => serde_json::from_value(v.clone())
                    .map_err(|_| CliError::Config("format must be 'csv' or 'json'".into()))?,
                (None, None) => Format::default(),
            };
            echo.insert("seed".into(), Value::from($seed));
            echo.insert("format".into(), serde_json::to_value(format).unwrap());
            let (specs, report) = $body?;
            let header = Header {
                command: $name,
                model_hash: model_hash(&specs),
                seed: $seed,
                config: echo,
            };
            (render(&header, &report, format))
        }};
    }
    let text = match &cli.command {
        Command::Spectra(a) => dispatch!(a, "spectra", |a, _seed| spectra(&a)),
        Command::Solve(a) => dispatch!(a, "solve", |a, _seed| solve(&a)),
        Command::Dissipation(a) => dispatch!(a, "dissipation", |a, _seed| dissipation(&a)),
        Command::Concentration(a) => dispatch!(a, "concentration", |a, _seed| concentration(&a)),
        Command::Simulate(a) => dispatch!(a, "simulate", |a, seed| simulate_cmd(&a, seed)),
        Command::Structure(a) => dispatch!(a, "structure", |a, _seed| structure(&a)),
        Command::Lln(a) => dispatch!(a, "lln", |a, seed| lln(&a, seed)),
    };
    match &cli.output {
        Some(path) => std::fs::write(path, text)?,
        None => match std::io::stdout().lock().write_all(text.as_bytes()) {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
            other => other?,
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rcm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
