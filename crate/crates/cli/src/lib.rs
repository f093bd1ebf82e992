//! `epictrl` command-line driver: simulate, optimize, gradcheck, convergence.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use epictrl_core::config::{parse_config, ScenarioConfig};
use epictrl_core::Error;
use serde_json::json;
use sha2::{Digest, Sha256};

mod commands;

pub use commands::{timeseries_csv, Artifacts};

#[derive(Debug, Parser)]
#[command(name = "epictrl", version, about = "Spatial SEIRS simulation and transmission-rate control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Also write adjoint snapshots.
    #[arg(long, global = true)]
    pub dump_adjoint: bool,
    /// Replace the time step; must divide the horizon.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Comma-separated delays for `convergence`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub tau_list: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Integrate the epidemic forward with the configured initial controls.
    Simulate,
    /// Projected-gradient optimisation of the transmission rates.
    Optimize,
    /// Adjoint gradient against central differences.
    Gradcheck {
        /// Also tabulate the linearisation remainder.
        #[arg(long)]
        tangent: bool,
    },
    /// Delayed-scheme error table against the forward solver.
    Convergence,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Optimize => "optimize",
            Command::Gradcheck { .. } => "gradcheck",
            Command::Convergence => "convergence",
        }
    }
}

/// Process exit status for an error: 2 for bad input, 3 for numerical failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numerical(_) => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

/// Single-line JSON record written to stderr on failure.
pub fn error_record(err: &Error) -> String {
    json!({ "error": { "kind": err.kind(), "message": err.to_string(), "exit_code": exit_code(err) } }).to_string()
}

pub fn config_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Worker count from `EPICTRL_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("EPICTRL_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Everything a command needs besides the parsed scenario.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: ScenarioConfig,
    pub config_hash: String,
    pub config_name: String,
    pub out_dir: PathBuf,
    pub dump_adjoint: bool,
    pub dt_override: Option<f64>,
    pub tau_list: Vec<f64>,
}

fn prepare(cli: &Cli) -> Result<RunContext, Error> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let bytes = fs::read(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config = parse_config(path)?;
    if let Some(dt) = cli.dt {
        config = config.with_dt(dt)?;
    }
    let out_dir = match &cli.out {
        Some(dir) => dir.clone(),
        None => config.base_dir.join(&config.raw.output.dir),
    };
    let tau_list = cli.tau_list.clone().unwrap_or_else(|| config.tau_list());
    Ok(RunContext {
        config_hash: config_hash(&bytes),
        config_name: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        config,
        out_dir,
        dump_adjoint: cli.dump_adjoint,
        dt_override: cli.dt,
        tau_list,
    })
}

/// Parse, validate, run one command and write its artifacts.
pub fn run(cli: &Cli) -> Result<Artifacts, Error> {
    let ctx = prepare(cli)?;
    fs::create_dir_all(&ctx.out_dir)?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = thread_cap() {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?
    };
    pool.install(|| commands::dispatch(cli.command, &ctx))
}

/// Entry point used by the binary; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(artifacts) => {
            for path in &artifacts.files {
                println!("{}", path.display());
            }
            0
        }
        Err(err) => {
            eprintln!("{}", error_record(&err));
            exit_code(&err)
        }
    }
}

pub(crate) fn write_file(dir: &Path, name: &str, contents: &str, out: &mut Artifacts) -> Result<(), Error> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(&path, contents)?;
    out.files.push(path);
    Ok(())
}
