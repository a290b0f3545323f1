//! `logit-vb`: fit Bayesian logistic regression by CAVI, tangent-bound EM or
//! SVI, compute maximum-likelihood estimates by MM or Newton, and reproduce the
//! shrinkage and rate experiments.
//!
//! Exit status: 0 on success, 2 on invalid input or flags, 3 when a fit
//! diverges.

mod commands;
mod input;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "logit-vb",
    version,
    about = "Variational Bayes for logistic regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Coordinate-ascent variational inference.
    FitCavi(CaviArgs),
    /// Tangent-bound EM; same iterates as CAVI, also reports the bound trace.
    FitEm(CaviArgs),
    /// Stochastic variational inference with Robbins-Monro steps.
    FitSvi(SviArgs),
    /// Maximum likelihood by Jaakkola MM, Bohning MM or Newton-Raphson.
    FitMle(MleArgs),
    /// Simulate the single-covariate shrinkage study and write a long-format table.
    #[command(name = "experiment-fig1")]
    ExperimentFig1(Fig1Args),
    /// MM convergence rates for a dataset, or a seeded synthetic sweep.
    Rates(RatesArgs),
    /// Brute-force checks: quadrature evidence and moments, or re-evaluation
    /// of a result document.
    #[command(hide = true)]
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV with a header row; column `y` is the response.
    #[arg(long)]
    pub data: PathBuf,
    /// Prepend a column of ones.
    #[arg(long)]
    pub intercept: bool,
}

#[derive(Debug, Args)]
pub struct PriorArgs {
    /// Prior mean: a scalar for every coefficient or a comma-separated list.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub prior_mean: String,
    /// Prior covariance: a scalar v for v*I, or a file holding the full matrix.
    #[arg(long, default_value = "10")]
    pub prior_var: String,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Seed recorded in the result document; all randomness derives from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Result document path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the objective trace as CSV.
    #[arg(long)]
    pub trace_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CaviArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Convergence tolerance [default: 1e-8].
    #[arg(long)]
    pub tol: Option<f64>,
    /// Maximum number of sweeps [default: 1000].
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Initial local parameters: a constant, or `prior` for |x_i' mu0|.
    #[arg(long, default_value = "1")]
    pub xi_init: String,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SviArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Log the full-data ELBO every this many steps.
    #[arg(long, default_value_t = 1000)]
    pub eval_every: usize,
    /// Start from the prior mean plus N(0, s^2) noise instead of the prior.
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// Step-size delay: rho_t = (t + tau)^-kappa.
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Step-size forgetting rate, in (0.5, 1].
    #[arg(long, default_value_t = 0.75)]
    pub kappa: f64,
    /// Number of stochastic steps.
    #[arg(long, default_value_t = 100_000)]
    pub iters: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Jaakkola,
    Bohning,
    Newton,
}

#[derive(Debug, Args)]
pub struct MleArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "newton")]
    pub method: MethodArg,
    /// Optional zero-mean Gaussian penalty (MAP): scalar v or a matrix file.
    #[arg(long)]
    pub prior_var: Option<String>,
    /// Stop when the sup-norm step falls below this [default: 1e-10].
    #[arg(long)]
    pub tol: Option<f64>,
    /// Maximum number of iterations [default: 10000].
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct Fig1Args {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Replicates per sample size.
    #[arg(long, default_value_t = 50)]
    pub replicates: usize,
    /// Sample sizes, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "20,100,1000,10000")]
    pub sizes: Vec<usize>,
    /// Prior variance v in beta ~ N(0, v I).
    #[arg(long, default_value_t = 10.0)]
    pub prior_var: f64,
    /// CAVI tolerance [default: 1e-8].
    #[arg(long)]
    pub tol: Option<f64>,
    /// CAVI sweep limit [default: 1000].
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RatesArgs {
    /// Dataset to analyse; a synthetic sweep runs when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    pub intercept: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of synthetic instances.
    #[arg(long, default_value_t = 200, conflicts_with = "data")]
    pub instances: usize,
    /// MLE tolerance [default: 1e-12].
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Data to use; defaults to the path recorded in the result document.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub intercept: bool,
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Re-evaluate the ELBO of this result document.
    #[arg(long)]
    pub result: Option<PathBuf>,
    /// Trapezoid nodes per axis.
    #[arg(long, default_value_t = logit_vb::oracle::DEFAULT_NODES)]
    pub nodes: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A command failure, already classified by exit status.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Diverged(String),
}

impl Failure {
    pub fn validation(msg: impl Into<String>) -> Self {
        Failure::Validation(msg.into())
    }

    pub fn diverged(msg: impl Into<String>) -> Self {
        Failure::Diverged(msg.into())
    }
}

impl From<logit_vb::Error> for Failure {
    fn from(e: logit_vb::Error) -> Self {
        use logit_vb::Error::*;
        match e {
            NotConverged { .. } | NotPositiveDefinite => Failure::Diverged(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::FitCavi(a) => commands::fit_cavi(&a, false),
        Command::FitEm(a) => commands::fit_cavi(&a, true),
        Command::FitSvi(a) => commands::fit_svi(&a),
        Command::FitMle(a) => commands::fit_mle(&a),
        Command::ExperimentFig1(a) => commands::experiment_fig1(&a),
        Command::Rates(a) => commands::rates(&a),
        Command::Oracle(a) => commands::oracle(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("logit-vb: error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Diverged(msg)) => {
            eprintln!("logit-vb: diverged: {msg}");
            ExitCode::from(3)
        }
    }
}
