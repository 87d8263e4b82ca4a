//! `rota3`: batch driver for simulation, filtering, maximization,
//! benchmarking and comparison runs on the three-stratum rotavirus model.

mod commands;
mod config;
mod record;
mod svg;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use crate::commands::Command;
use crate::record::{RunRecord, VERSION};

#[derive(Debug, Parser)]
#[command(name = "rota3", version, about = "PF and PAL experiments on a three-stratum rotavirus model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Root seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Run log that receives one JSON record per completed invocation.
    #[arg(long, global = true, default_value = "runs.jsonl")]
    runs: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, arguments or input files.
    Input(String),
    /// The numerics failed on valid inputs.
    Numeric(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<pomp::Error> for CliError {
    fn from(e: pomp::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Input("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    let mut inputs = BTreeMap::new();
    for (key, path) in cli.command.inputs() {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        inputs.insert(key.to_string(), text);
    }
    let started = Instant::now();
    let outcome = cli.command.execute(cli.seed, &cli.runs)?;
    for line in &outcome.stdout {
        println!("{line}");
    }
    RunRecord {
        subcommand: cli.command.name().to_string(),
        command: cli.command.clone(),
        config: outcome.config,
        inputs,
        seed: cli.seed,
        workers: rayon::current_num_threads(),
        version: VERSION.to_string(),
        duration_secs: started.elapsed().as_secs_f64(),
        outputs: outcome.outputs,
    }
    .append(&cli.runs)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
