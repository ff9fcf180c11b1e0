//! `steklov`: solve, optimize, sigma-sweep, shape-deriv and symmetry-check runs
//! driven by a JSON configuration.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use steklov_core::assembly::Binarize;

use crate::config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation, configuration or input file.
    Usage(String),
    /// A solver or optimization stage failed.
    Numerical(String),
}

impl From<steklov_core::Error> for CliError {
    fn from(e: steklov_core::Error) -> Self {
        use steklov_core::Error as E;
        match e {
            E::Argument(_)
            | E::Resource(_)
            | E::Parse { .. }
            | E::Topology(_)
            | E::OpenBoundary(_)
            | E::OutOfRange { .. }
            | E::Shape(_)
            | E::NotDisk
            | E::Json(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "steklov", version, about = "First Steklov eigenvalue of the p-Laplacian with a boundary potential")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads for independent solves (defaults to all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory (overrides `output_dir` in the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BinarizeMode {
    /// Fractional values of at least 1/2 become 1.
    Round,
    /// Fractional values become 0.
    Drop,
    /// Every positive value becomes 1.
    Support,
}

impl From<BinarizeMode> for Binarize {
    fn from(m: BinarizeMode) -> Self {
        match m {
            BinarizeMode::Round => Binarize::Round,
            BinarizeMode::Drop => Binarize::Drop,
            BinarizeMode::Support => Binarize::Support,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// First eigenpair for the configured potential.
    Solve(Common),
    /// Alternating minimization of the eigenvalue over potentials of mass `a`.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Write an indicator potential instead of the one with a fractional edge.
        #[arg(long, value_enum, num_args = 0..=1, default_missing_value = "round")]
        binarize: Option<BinarizeMode>,
    },
    /// Optimized eigenvalue for increasing penalties against the Dirichlet limit.
    SigmaSweep(Common),
    /// Closed-form tangential shape derivative against central differences.
    ShapeDeriv(Common),
    /// Multistart optimization on the disk: equal eigenvalues and single-arc optima.
    SymmetryCheck(Common),
}

fn setup(common: &Common) -> Result<(RunConfig, PathBuf), CliError> {
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let cfg = RunConfig::from_file(&common.config)?;
    let out = common.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out.display())))?;
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Solve(c) => {
            let (cfg, out) = setup(&c)?;
            commands::solve(&cfg, &out)
        }
        Command::Optimize { common, binarize } => {
            let (cfg, out) = setup(&common)?;
            commands::optimize(&cfg, &out, binarize.map(Into::into))
        }
        Command::SigmaSweep(c) => {
            let (cfg, out) = setup(&c)?;
            commands::sigma_sweep(&cfg, &out)
        }
        Command::ShapeDeriv(c) => {
            let (cfg, out) = setup(&c)?;
            commands::shape_deriv(&cfg, &out)
        }
        Command::SymmetryCheck(c) => {
            let (cfg, out) = setup(&c)?;
            commands::symmetry_check(&cfg, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            match &e {
                CliError::Usage(msg) => eprintln!("error: {msg}"),
                CliError::Numerical(msg) => eprintln!("numerical failure: {msg}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
