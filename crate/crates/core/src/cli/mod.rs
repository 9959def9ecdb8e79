//! Command-line front end.
//!
//! Every subcommand reads the shared job files, runs one pipeline stage and
//! writes machine-readable results into `--out-dir`; stdout only carries a
//! human-readable summary. Exit codes: 0 success, 1 I/O or validation error,
//! 2 when `verify` does not certify stability.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub use io::fmt_float;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] crate::Error),
}

#[derive(Debug, Parser)]
#[command(name = "certnn", version, about = "Verify ReLU network controllers for linear systems")]
pub struct Cli {
    /// System description (A, B, X, U, Q, R) as JSON.
    #[arg(long, global = true)]
    pub system: Option<PathBuf>,
    /// Network file as JSON.
    #[arg(long, global = true)]
    pub network: Option<PathBuf>,
    /// Initial state set as a polytope JSON file.
    #[arg(long, global = true)]
    pub xin: Option<PathBuf>,
    /// Directory for all output files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Largest horizon tried when searching for entry into the stability set.
    #[arg(long, global = true, default_value_t = 25)]
    pub kmax: usize,
    /// Tolerance on the bias and LQR-match residuals.
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub tol: f64,
    /// Worker threads for independent MILP solves (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Seed for sampled initial states.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GainSource {
    /// Synthesize K from Q and R in the system file.
    Lqr,
    /// Read K from `--gain`.
    File,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full certification and write certificate.json.
    Verify,
    /// Replace the output layer so the network reproduces -K x near the origin.
    Retrofit {
        #[arg(long, value_enum, default_value_t = GainSource::Lqr)]
        k_source: GainSource,
        /// Gain matrix as JSON (nested rows) when --k-source file.
        #[arg(long)]
        gain: Option<PathBuf>,
    },
    /// Append saturation layers clamping the output to the input box.
    Saturate,
    /// Enumerate the affine regions of the network inside X_in.
    Regions,
    /// Simulate the closed loop and write trajectory CSV files.
    Simulate {
        /// Initial state, comma separated; sampled from X_in when absent.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        /// Number of sampled initial states when --x0 is absent.
        #[arg(long, default_value_t = 1)]
        samples: usize,
    },
    /// Write R_lqr, R_eq, R_as and the reach sets as JSON and vertex CSV.
    Sets,
    /// Write a saturated network computing clamp(-K x) with the LQR gain.
    Synth {
        /// Offset of the hidden pairs; defaults to just outside X.
        #[arg(long, allow_hyphen_values = true)]
        offset: Option<f64>,
    },
}

/// Parses arguments, runs the command and maps the outcome to an exit code.
pub fn run_from_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if cli.threads > 0 {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
