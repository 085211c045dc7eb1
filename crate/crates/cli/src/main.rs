//! `minsoftmax` command-line front end.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use minsoftmax::Error;

/// Exit status for a failed verification suite.
const EXIT_VERIFY_FAILED: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "minsoftmax", version, about = "Robust dynamic programming against entropy-regularized adversaries")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "MINSOFTMAX_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and validate a scenario, then print its dimensions.
    Validate { scenario: PathBuf },

    /// Solve at one penalty pair and write value, policy and adversary tables.
    Solve {
        scenario: PathBuf,
        #[arg(long)]
        gamma_h: f64,
        #[arg(long)]
        gamma_e: f64,
        #[arg(long)]
        out: PathBuf,
        /// Initial state for the printed J_0: a state index, or comma-separated coordinates for LQ.
        #[arg(long)]
        x0: Option<String>,
    },

    /// Solve over a penalty grid and write one summary row per point.
    Sweep {
        scenario: PathBuf,
        /// Comma list; combined with --gamma-e as a cartesian grid.
        #[arg(long)]
        gamma_h: Option<String>,
        #[arg(long)]
        gamma_e: Option<String>,
        /// Explicit pairs `gh:ge,gh:ge`, appended after the grid.
        #[arg(long)]
        pairs: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        x0: Option<String>,
    },

    /// Solve, then roll the policy out and write trajectory statistics.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        gamma_h: Option<String>,
        #[arg(long)]
        gamma_e: Option<String>,
        #[arg(long)]
        pairs: Option<String>,
        #[arg(long)]
        n_rollouts: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Initial state index.
        #[arg(long)]
        x0: Option<usize>,
        #[arg(long, value_enum)]
        model: Option<ModelArg>,
        /// Write raw trajectories when rollouts times stages exceed this many visits.
        #[arg(long)]
        spill_threshold: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },

    /// Run an oracle suite and print PASS/FAIL per check.
    Verify {
        /// Scenario to check; a random finite system or the scalar LQ benchmark when omitted.
        scenario: Option<PathBuf>,
        #[arg(long, value_enum)]
        suite: Suite,
        /// Penalty pair for the simplex and quadrature suites.
        #[arg(long, default_value_t = 4.0)]
        gamma_h: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma_e: f64,
        /// Seed of the random system.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// States of the random system.
        #[arg(long, default_value_t = 5)]
        states: usize,
        /// Multiple of the critical gamma_h for the attenuation suite.
        #[arg(long, default_value_t = 1.1)]
        margin: f64,
        /// Quadrature nodes.
        #[arg(long, default_value_t = 100_000)]
        nodes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Critical likelihood factor of an LQ scenario.
    Critical {
        scenario: PathBuf,
        /// Stage count or `infinite`; defaults to the scenario's horizon.
        #[arg(long)]
        horizon: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Write a bundled scenario to a file.
    Export {
        #[arg(value_enum)]
        name: Bundled,
        path: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ModelArg {
    Empirical,
    Adversarial,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Suite {
    Simplex,
    Quadrature,
    Limits,
    Attenuation,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Bundled {
    Irrigation,
    Fig3,
    Fig4,
    LqScalar,
}

/// Failure of a command: a library error or a verification suite with FAILs.
#[derive(Debug)]
enum Failure {
    Lib(Error),
    Verify { failed: usize },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::MBelowCritical { .. } => 2,
        _ => 1,
    }
}

/// One JSON object on stderr so scripts can dispatch on `kind`.
fn report(f: &Failure) -> u8 {
    let line = match f {
        Failure::Lib(e) => {
            let mut obj = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            if let Error::MBelowCritical { stage, min_eigenvalue } = e {
                obj["stage"] = serde_json::json!(stage);
                obj["min_eigenvalue"] = serde_json::json!(min_eigenvalue);
            }
            obj
        }
        Failure::Verify { failed } => {
            serde_json::json!({ "error": "VerificationFailed", "message": format!("{failed} checks failed"), "failed": failed })
        }
    };
    eprintln!("{line}");
    match f {
        Failure::Lib(e) => exit_code(e),
        Failure::Verify { .. } => EXIT_VERIFY_FAILED,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => ExitCode::from(report(&f)),
    }
}
