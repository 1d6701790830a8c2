//! Bayesian spatio-temporal discrete-time survival model on cluster-level
//! grade counts, fit by Hamiltonian Monte Carlo.

mod betabinom;
mod cells;
pub mod diagnostics;
mod draws_io;
mod graph;
mod hmc;
mod model;
mod posterior;
mod priors;
mod simulate;
mod structure;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use betabinom::{beta_binomial_logpmf, ln_choose};
pub use cells::{build_cells, grades_needed, GradeCountCell};
pub use draws_io::{read_draws, write_draws};
pub use graph::SpatialGraph;
pub use model::{column_names, Latent, ParamLayout, SpatialModel, HYPER_NAMES};
pub use posterior::{posterior_hazards, posterior_uys, posterior_uys_weighted, quantile, summarize_draws};
pub use priors::{MixingPrior, PcPriorConfig, RhoPrior, SdPrior};
pub use simulate::{simulate_spatial_dataset, SimDesign, SimTruth};
pub use structure::{
    build_latent_structure, kronecker, numerical_rank, rw1_structure, scale_structure, scaled_rw1,
    type_iv_constraints, type_iv_precision, LatentStructure, ScaledStructure,
};

use crate::data::Id;

#[derive(Debug, Error)]
pub enum SpatialError {
    #[error("graph has no areas")]
    EmptyGraph,
    #[error("invalid graph: {0}")]
    Graph(String),
    #[error("area `{0}` is not in the graph")]
    UnknownArea(String),
    #[error("cohort {0} is not in the model")]
    UnknownCohort(i32),
    #[error("no grade cells to fit")]
    NoData,
    #[error("parameter out of range: {0}")]
    Domain(String),
    #[error("invalid prior: {0}")]
    Prior(String),
    #[error("non-finite log posterior ({0}) at the initial values of chain {1}")]
    Init(f64, usize),
    #[error("posterior draws are for the {fit} stratum, not {requested}")]
    StratumMismatch { fit: String, requested: String },
    #[error("malformed draws file: {0}")]
    DrawsFormat(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub chains: usize,
    /// Retained draws per chain.
    pub draws: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub max_leapfrog: usize,
    pub target_accept: f64,
    pub rhat_threshold: f64,
    pub priors: PcPriorConfig,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            draws: 2000,
            burnin: 2000,
            thin: 1,
            seed: 1,
            max_leapfrog: 32,
            target_accept: 0.8,
            rhat_threshold: 1.1,
            priors: PcPriorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub rhat: BTreeMap<String, f64>,
    pub ess: BTreeMap<String, f64>,
    pub step_sizes: Vec<f64>,
    pub accept_rates: Vec<f64>,
    pub divergences: Vec<usize>,
    /// Hyperparameters whose R-hat exceeds the configured threshold.
    pub flagged: Vec<String>,
}

impl Diagnostics {
    pub fn max_hyper_rhat(&self) -> f64 {
        HYPER_NAMES
            .iter()
            .filter_map(|h| self.rhat.get(*h))
            .copied()
            .fold(f64::NAN, f64::max)
    }
}

/// Draws of the natural-scale parameters, one row per draw, chains stacked
/// in seed order.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub columns: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub chain: Vec<usize>,
    pub seed: u64,
    pub n_chains: usize,
    pub cohorts: Vec<i32>,
    pub areas: Vec<Id>,
    pub n_grades: usize,
    pub urban: Option<bool>,
    pub diagnostics: Diagnostics,
}

impl PosteriorDraws {
    pub fn n_draws(&self) -> usize {
        self.values.len()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.values.iter().map(|r| r[j]).collect())
    }

    fn offsets(&self) -> (usize, usize, usize, usize, usize, usize) {
        let g = self.n_grades;
        let b = self.cohorts.len();
        let a = self.areas.len();
        // beta, phi, nu, u, s, zeta
        (0, g, g + b, g + 2 * b, g + 2 * b + a, g + 2 * b + 2 * a)
    }

    fn cohort_index(&self, cohort: i32) -> Option<usize> {
        self.cohorts.iter().position(|&c| c == cohort)
    }

    fn area_index(&self, area: &str) -> Option<usize> {
        self.areas.iter().position(|a| a.as_ref() == area)
    }
}

fn initial_position(model: &SpatialModel, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let l = &model.layout;
    let mut q: Vec<f64> = (0..l.dim).map(|_| rng.random_range(-0.5..0.5)).collect();
    for (k, h) in model.pooled_hazards().into_iter().enumerate() {
        q[l.beta + k] = crate::delta::logit(h) + rng.random_range(-0.2..0.2);
    }
    let h = l.hyper;
    for j in [0, 1, 2, 4] {
        q[h + j] = 0.2f64.ln() + rng.random_range(-0.5..0.5);
    }
    q[h + 3] = rng.random_range(-1.0..1.0);
    q[h + 5] = crate::delta::logit(0.03) + rng.random_range(-0.5..0.5);
    q
}

/// Runs the configured chains sequentially. Chain `c` draws from stream
/// `c + 1` of a ChaCha generator keyed by the seed, so the output depends
/// only on the inputs and the seed.
pub fn fit_mcmc(
    cells: &[GradeCountCell],
    structure: &LatentStructure,
    config: &McmcConfig,
) -> Result<PosteriorDraws, SpatialError> {
    let mut model = SpatialModel::new(cells, structure.clone(), &config.priors)?;
    let settings = hmc::HmcSettings {
        draws: config.draws.max(1),
        burnin: config.burnin,
        thin: config.thin,
        max_leapfrog: config.max_leapfrog,
        target_accept: config.target_accept,
    };
    let columns = model.column_names();
    let mut values = Vec::with_capacity(config.chains * settings.draws);
    let mut chain_of = Vec::with_capacity(values.capacity());
    let mut diagnostics = Diagnostics::default();
    for c in 0..config.chains.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(c as u64 + 1);
        let init = initial_position(&model, &mut rng);
        let out = hmc::run_chain(&mut model, init, &settings, &mut rng).map_err(|lp| SpatialError::Init(lp, c))?;
        diagnostics.step_sizes.push(out.step_size);
        diagnostics.accept_rates.push(out.accept_rate);
        diagnostics.divergences.push(out.divergences);
        for q in &out.positions {
            values.push(model.natural(q));
            chain_of.push(c);
        }
    }
    let n_chains = config.chains.max(1);
    for (j, name) in columns.iter().enumerate() {
        let traces: Vec<Vec<f64>> = (0..n_chains)
            .map(|c| {
                values
                    .iter()
                    .zip(&chain_of)
                    .filter(|(_, &ch)| ch == c)
                    .map(|(r, _)| r[j])
                    .collect()
            })
            .collect();
        diagnostics.rhat.insert(name.clone(), diagnostics::split_rhat(&traces));
        diagnostics.ess.insert(name.clone(), diagnostics::ess(&traces));
    }
    for h in HYPER_NAMES {
        let r = diagnostics.rhat[h];
        if !(r < config.rhat_threshold) {
            log::warn!("R-hat for {h} is {r:.3}, above {}", config.rhat_threshold);
            diagnostics.flagged.push(h.to_string());
        }
    }
    let urban = {
        let mut it = cells.iter().map(|c| c.urban);
        let first = it.next();
        first.filter(|&f| it.all(|u| u == f))
    };
    Ok(PosteriorDraws {
        columns,
        values,
        chain: chain_of,
        seed: config.seed,
        n_chains,
        cohorts: structure.cohorts.clone(),
        areas: structure.areas.clone(),
        n_grades: structure.n_grades,
        urban,
        diagnostics,
    })
}
