//! `uys`: estimate ultimate years of schooling from survey microdata, run
//! the censoring bias study and build plot-ready domain summaries.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "uys", version, about = "Ultimate years of schooling from right-censored survey data")]
pub struct Cli {
    /// Seed for MCMC chains and censoring replicates. Synthetic populations
    /// use `synthetic.seed` from the config so they stay fixed across runs.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// JSON file with `schema`, `mcmc`, `simulation` and `synthetic` sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Only print errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Expand respondents into person-grade risk rows.
    Expand {
        #[arg(long)]
        input: PathBuf,
    },
    /// Estimate UYS with one of the four estimators.
    Estimate {
        #[command(subcommand)]
        method: EstimateCommand,
    },
    /// Censoring bias study on synthetic or supplied data.
    Simulate(SimulateArgs),
    /// Combine urban and rural posterior draws into domain summaries.
    Report(ReportArgs),
    /// Write a synthetic survey and its area graph.
    Synth,
}

#[derive(Debug, Args, Serialize)]
pub struct DomainArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// One estimate per area within each cohort.
    #[arg(long)]
    pub by_area: bool,
    /// One estimate per urban/rural stratum within each domain.
    #[arg(long)]
    pub by_urban: bool,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateCommand {
    /// Weighted share of completed years, ignoring censoring.
    Naive(DomainArgs),
    /// Weighted discrete-time hazards with delta-method intervals.
    Modified(DomainArgs),
    /// Survey-weighted continuation-odds model.
    Glm(GlmArgs),
    /// Bayesian spatio-temporal beta-binomial model.
    Spatial(SpatialArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GlmArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Reference cohort; defaults to the earliest.
    #[arg(long)]
    pub ref_cohort: Option<i32>,
    /// Reference area; adds area effects to the model.
    #[arg(long)]
    pub ref_area: Option<String>,
    /// Add area effects with the first area as reference.
    #[arg(long)]
    pub areas: bool,
    /// `all`, or a comma-separated list of cohorts (`1990`) or cohort:area
    /// pairs (`1990:north`).
    #[arg(long, default_value = "all")]
    pub targets: String,
    /// Include the coefficient covariance in the fit summary.
    #[arg(long)]
    pub covariance: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct SpatialArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// CSV edge list with columns area_a, area_b.
    #[arg(long)]
    pub graph: PathBuf,
    /// Fit urban and rural strata separately.
    #[arg(long)]
    pub urban_stratified: bool,
    /// Retained draws per chain; overrides the config file.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Naive,
    Modified,
    Glm,
    Spatial,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Respondent CSV; a synthetic population is generated when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// JSON study description (scenarios, replicates, estimators); falls
    /// back to the `simulation` section of the config file.
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Estimators to compare; overrides the study description.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub estimators: Vec<MethodArg>,
    /// Area graph, needed for the spatial estimator on supplied data.
    #[arg(long)]
    pub graph: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Draws of the urban (or unstratified) fit.
    #[arg(long)]
    pub urban_draws: PathBuf,
    /// Draws of the rural fit; only fully urban domains may go without.
    #[arg(long)]
    pub rural_draws: Option<PathBuf>,
    /// CSV with columns area_id, group, fraction. Groups are cohort labels.
    #[arg(long)]
    pub fractions: PathBuf,
    /// Urban-rural gaps for exceedance probabilities.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub thresholds: Vec<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.quiet {
            log::LevelFilter::Error
        } else {
            log::LevelFilter::Info
        })
        .parse_env("UYS_LOG")
        .format_timestamp(None)
        .init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
