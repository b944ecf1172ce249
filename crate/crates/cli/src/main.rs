//! `qstat`: systematic-error tests, state estimation, PPT-mixture
//! certificates and exponential-family complexity from the command line.
//!
//! Exit codes: 0 success (compatible / PPT mixture), 1 usage or data error,
//! 2 incompatible, 3 genuinely multipartite entangled, 4 solver failure,
//! 5 information projection did not converge.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_DATA: u8 = 1;
pub const EXIT_INCOMPATIBLE: u8 = 2;
pub const EXIT_GME: u8 = 3;
pub const EXIT_SOLVER: u8 = 4;
pub const EXIT_NOT_CONVERGED: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = "qstat", version, about = "Statistical analysis of multiqubit measurement data")]
pub struct Cli {
    /// Seed for data splitting and sampling.
    #[arg(long, global = true, env = "QSTAT_SEED", default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Split-sample witness test of the declared measurement model.
    Systest(SystestArgs),
    /// Linear-inversion or maximum-likelihood state estimate.
    Tomo(TomoArgs),
    /// PPT-mixture program: certify genuine multipartite entanglement.
    Gme(GmeArgs),
    /// Information projection onto k-local thermal states.
    Expfam(ExpfamArgs),
    /// Draw counts from a state under a model.
    Sample(SampleArgs),
    /// Repeated-sampling bias experiment for GHZ-fidelity estimates.
    Bias(BiasArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum KindArg {
    Positivity,
    Linearity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Lin,
    Ml,
}

#[derive(Args, Debug)]
pub struct SystestArgs {
    /// Model document.
    pub model: PathBuf,
    /// Counts document.
    pub counts: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = KindArg::Positivity)]
    pub kind: KindArg,
    /// Report document path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TomoArgs {
    pub model: PathBuf,
    pub counts: PathBuf,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Lin)]
    pub estimator: EstimatorArg,
    /// Pure-state document; adds a one-sided fidelity bound to the report.
    #[arg(long)]
    pub target_state: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Stopping tolerance of the ML iteration.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 20_000)]
    pub max_iter: usize,
    /// State document path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fidelity report path; needs --target-state.
    #[arg(long, requires = "target_state")]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("input").required(true).multiple(true).args(["state", "expectations", "verify"])))]
pub struct GmeArgs {
    /// State document.
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// Expectations document.
    #[arg(long, conflicts_with = "state")]
    pub expectations: Option<PathBuf>,
    /// Re-check a certificate document; with --state also recompute its value.
    #[arg(long, conflicts_with = "expectations")]
    pub verify: Option<PathBuf>,
    #[arg(long, default_value_t = qstat_core::gme::DEFAULT_SOLVER_TOL)]
    pub tol: f64,
    /// Certificate (or verification report) path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to write the failing problem when the solver fails.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_conflicts_with_subcommands = true)]
pub struct ExpfamArgs {
    #[command(subcommand)]
    pub check: Option<ExpfamCheck>,
    /// State document.
    #[arg(long)]
    pub state: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = qstat_core::expfam::DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = qstat_core::expfam::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum ExpfamCheck {
    /// Fidelity with the five-qubit ring cluster state and whether it
    /// exceeds what any two-body thermal state reaches.
    R5Check {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    pub model: PathBuf,
    /// State document.
    pub state: PathBuf,
    #[arg(long)]
    pub shots: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BiasArgs {
    #[arg(long, default_value_t = 4)]
    pub qubits: usize,
    /// GHZ fidelity of the simulated white-noise state.
    #[arg(long, default_value_t = 0.8)]
    pub fidelity: f64,
    #[arg(long, default_value_t = 100)]
    pub shots: u64,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    /// Per-trial fidelities as CSV (estimator, trial, fidelity).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failed command: exit code plus message.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn data(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<qstat_core::Error> for Failure {
    fn from(e: qstat_core::Error) -> Self {
        Failure::data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_DATA } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("qstat: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
