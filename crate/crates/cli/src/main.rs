//! `clockfcs`: counting statistics, bounds, sweeps and trajectory checks for
//! ticking clockworks, driven by JSON run configurations.
//!
//! Exit status: 0 success, 2 configuration error, 3 numerical failure,
//! 4 bound violation. Failures print a JSON record on stderr.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clockfcs::Error;
use serde_json::json;

use crate::config::{Command, RunConfig};

#[derive(Parser)]
#[command(name = "clockfcs", version, about = "Counting statistics of ticking clockworks under feedback")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Run the command named in the config file.
    Run(Common),
    /// F, D and S of a current.
    Snr(Common),
    /// F, D, S with the kinetic, clock and feedback bounds that apply.
    Bounds(Common),
    /// Evaluate an objective on a grid and write the table.
    Sweep(Common),
    /// Grid sweep followed by Nelder–Mead refinement.
    Optimize(Common),
    /// Trajectory estimates of F and D, compared with the exact values.
    Simulate(Common),
    /// Randomized check of the feedback bound on classical clockworks.
    VerifyTheorem1(Common),
    /// Constant policies against the optimized switching policy.
    Compare(Common),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON run configuration.
    config: Option<PathBuf>,
    /// CSV table destination.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "CLOCKFCS_THREADS")]
    threads: Option<usize>,
    /// Seed for simulate and verify-theorem1.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of random instances for verify-theorem1.
    #[arg(long)]
    trials: Option<usize>,
    /// Simulation horizon T.
    #[arg(long)]
    horizon: Option<f64>,
    /// Number of simulated trajectories.
    #[arg(long)]
    trajectories: Option<usize>,
}

struct Failure {
    status: u8,
    kind: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure { status: 2, kind: "config", message: e.to_string() }
        } else {
            Failure { status: 3, kind: "numerical", message: e.to_string() }
        }
    }
}

fn prepare(sub: Sub) -> Result<(Command, RunConfig, Common), Failure> {
    let (cmd, args) = match sub {
        Sub::Run(a) => (None, a),
        Sub::Snr(a) => (Some(Command::Snr), a),
        Sub::Bounds(a) => (Some(Command::Bounds), a),
        Sub::Sweep(a) => (Some(Command::Sweep), a),
        Sub::Optimize(a) => (Some(Command::Optimize), a),
        Sub::Simulate(a) => (Some(Command::Simulate), a),
        Sub::VerifyTheorem1(a) => (Some(Command::VerifyTheorem1), a),
        Sub::Compare(a) => (Some(Command::Compare), a),
    };
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let cmd = match (cmd, cfg.command) {
        (Some(c), Some(f)) if c != f => {
            return Err(Error::Parse(format!("config is for `{f:?}`, not `{c:?}`")).into());
        }
        (Some(c), _) | (None, Some(c)) => c,
        (None, None) => return Err(Error::Parse("`run` needs a config with a `command`".into()).into()),
    };
    if args.output.is_some() {
        cfg.output = args.output.clone();
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    if let Some(s) = args.seed {
        cfg.simulate.seed = s;
        cfg.theorem1.seed = s;
    }
    if let Some(n) = args.trials {
        cfg.theorem1.trials = n;
    }
    if let Some(h) = args.horizon {
        cfg.simulate.horizon = Some(h);
    }
    if let Some(n) = args.trajectories {
        cfg.simulate.trajectories = n;
    }
    Ok((cmd, cfg, args))
}

fn execute(sub: Sub) -> Result<(), Failure> {
    let (cmd, cfg, _) = prepare(sub)?;
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(Error::Parse("threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure { status: 3, kind: "runtime", message: e.to_string() })?;
    }
    let outcome = commands::run(cmd, &cfg)?;
    if let (Some(path), Some(table)) = (&cfg.output, &outcome.table) {
        table.write(path)?;
    }
    let mut summary = outcome.summary;
    summary["command"] = serde_json::to_value(cmd).map_err(Error::from)?;
    println!("{}", serde_json::to_string_pretty(&summary).map_err(Error::from)?);
    if outcome.violation {
        return Err(Failure { status: 4, kind: "bound_violation", message: "a proven bound was exceeded".into() });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({"error": {"kind": f.kind, "message": f.message, "status": f.status}}));
            ExitCode::from(f.status)
        }
    }
}
