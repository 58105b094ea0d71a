//! `mjp` — linear response of Markov jump processes from the command line.
//!
//! Subcommands cover model inspection (`model describe|build`), trajectory
//! sampling (`simulate`), the three independent linear-response routes
//! (`lr mc|exact|fd`), the oscillatory steady state (`oss`), the complex
//! mobility matrix over a frequency grid (`mobility`), model-family condition
//! checkers (`check`), and the full acceptance suite (`validate`).
//!
//! Exit codes: 0 success, 2 configuration error (bad flags, malformed JSON,
//! invalid model or parameter), 3 solver or estimator failure, 4 validation
//! failure (`validate` with at least one red criterion).
//!
//! Every command is deterministic given `--seed` and a fixed config: results
//! carry no timestamps and Monte-Carlo path `i` always consumes RNG stream `i`
//! regardless of worker count.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Failure modes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Bad invocation, config, or model input (exit 2).
    Config(String),
    /// The computation itself failed (exit 3).
    Run(mjp_core::Error),
}

impl From<mjp_core::Error> for Failure {
    fn from(e: mjp_core::Error) -> Self {
        use mjp_core::Error::*;
        match e {
            InvalidModel(_) | InvalidParameter(_) | NonPositiveRate { .. } => {
                Failure::Config(e.to_string())
            }
            other => Failure::Run(other),
        }
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Run(_) => 3,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Config(m) => m.clone(),
            Failure::Run(e) => e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "mjp",
    version,
    about = "Linear response of Markov jump processes: Monte-Carlo, exact, and periodic steady-state routes"
)]
struct Cli {
    /// Worker threads (default: MJP_WORKERS env var, then all cores).
    /// Results are identical for any worker count.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect or canonicalize a model document.
    Model {
        #[command(subcommand)]
        action: ModelAction,
    },
    /// Sample unperturbed trajectories; print summary statistics.
    Simulate(RunArgs),
    /// Linear response at lambda = 0 of the configured path functional.
    Lr {
        #[command(subcommand)]
        route: LrRoute,
    },
    /// Periodic steady state: tilted distribution, phase slices, Fourier responses.
    Oss(RunArgs),
    /// Complex mobility matrix over a frequency grid (torus models only).
    Mobility(RunArgs),
    /// Model-family condition checkers (summability, confinement, moments).
    Check(RunArgs),
    /// Run the acceptance suite; exit 4 if any criterion fails.
    Validate(ValidateArgs),
}

#[derive(Subcommand)]
enum ModelAction {
    /// Print state count, stationary head, irreducibility, spectral gap, hash.
    Describe(RunArgs),
    /// Print (or write with --out) the canonicalized document and its hash.
    Build(RunArgs),
}

#[derive(Subcommand)]
enum LrRoute {
    /// Monte-Carlo: martingale-covariance (or jump-corrected) estimator.
    Mc(RunArgs),
    /// Exact stationary correlation formulas (semigroup + quadrature).
    Exact(RunArgs),
    /// Reweighted central finite difference in the tilt parameter.
    Fd(RunArgs),
}

/// Flags shared by every data-producing subcommand. All optional; values
/// resolve as flag > config file > documented default (see `config`).
#[derive(Args, Clone, Debug, Default)]
pub struct RunArgs {
    /// Run configuration JSON file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model document JSON file (overrides the config's `model`).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Base RNG seed; path i uses stream i of this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Monte-Carlo paths.
    #[arg(long)]
    paths: Option<u64>,
    /// Time horizon of each path / of the response integral.
    #[arg(long)]
    t: Option<f64>,
    /// Tilt strength lambda (oss).
    #[arg(long)]
    lambda: Option<f64>,
    /// Finite-difference step in lambda (lr fd).
    #[arg(long)]
    lambda_step: Option<f64>,
    /// Frequency grid start:stop:points, endpoints inclusive (mobility).
    #[arg(long)]
    omega_grid: Option<String>,
    /// Quadrature tolerance for the exact route.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Output file (JSON; CSV for mobility). Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug)]
struct ValidateArgs {
    /// Write the per-criterion report as JSON to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let workers = cli.workers.or_else(|| {
        std::env::var("MJP_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(w) = workers {
        if w == 0 {
            eprintln!("error: worker count must be at least 1");
            return ExitCode::from(2);
        }
        // Ignore the error from a second initialization (tests call main once).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }

    let result = match &cli.command {
        Command::Model { action } => match action {
            ModelAction::Describe(args) => commands::model_describe(args),
            ModelAction::Build(args) => commands::model_build(args),
        },
        Command::Simulate(args) => commands::simulate(args),
        Command::Lr { route } => match route {
            LrRoute::Mc(args) => commands::lr_mc(args),
            LrRoute::Exact(args) => commands::lr_exact(args),
            LrRoute::Fd(args) => commands::lr_fd(args),
        },
        Command::Oss(args) => commands::oss(args),
        Command::Mobility(args) => commands::mobility(args),
        Command::Check(args) => commands::check(args),
        Command::Validate(args) => return commands::validate(args.out.as_deref()),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
