//! Forward simulation from the spatial hazard model, producing person-level
//! records so every estimator can be run on the same synthetic survey.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Distribution, StandardNormal};

use super::model::{latent_of, Latent, ParamLayout};
use super::structure::LatentStructure;
use super::SpatialError;
use crate::data::{Dataset, DatasetOptions, Id, PersonRecord, SurveyDate};
use crate::delta::{expit, logit, uys_from_hazard_slice};

/// Survey layout and true hyperparameters for a simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDesign {
    /// Clusters drawn in each area.
    pub clusters_per_area: usize,
    /// Respondents per cluster in each cohort.
    pub persons_per_cohort: usize,
    /// Baseline hazard per grade; its length is the number of grades.
    pub baseline_hazards: Vec<f64>,
    pub sigma_phi: f64,
    pub sigma_nu: f64,
    pub sigma_u: f64,
    pub lambda: f64,
    pub sigma_zeta: f64,
    pub rho: f64,
    /// Cluster weights are drawn uniformly from this range.
    pub weight_range: (f64, f64),
    pub survey: SurveyDate,
}

impl Default for SimDesign {
    fn default() -> Self {
        Self {
            clusters_per_area: 12,
            persons_per_cohort: 6,
            baseline_hazards: vec![0.1, 0.04, 0.05, 0.06, 0.1, 0.15, 0.3, 0.35],
            sigma_phi: 0.3,
            sigma_nu: 0.1,
            sigma_u: 0.4,
            lambda: 0.5,
            sigma_zeta: 0.15,
            rho: 0.05,
            weight_range: (0.5, 2.0),
            survey: SurveyDate { year: 2020, month: 6 },
        }
    }
}

/// True values behind a simulated dataset.
#[derive(Debug, Clone)]
pub struct SimTruth {
    pub latent: Latent,
    /// Hazards per (cohort, area) for grades `0..n_grades`.
    pub hazards: BTreeMap<(i32, Id), Vec<f64>>,
}

impl SimTruth {
    pub fn uys(&self, cohort: i32, area: &str) -> Option<f64> {
        self.hazards
            .iter()
            .find(|((b, a), _)| *b == cohort && a.as_ref() == area)
            .map(|(_, h)| uys_from_hazard_slice(h))
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Draws the latent field from its prior at the design's hyperparameters and
/// simulates schooling histories with cluster-level beta-distributed
/// hazards. Cohort labels in `structure` are read as birth years. Nobody is
/// censored; anyone surviving every modelled grade completes `n_grades`
/// years.
pub fn simulate_spatial_dataset(
    structure: &LatentStructure,
    design: &SimDesign,
    rng: &mut ChaCha8Rng,
) -> Result<(Dataset, SimTruth), SpatialError> {
    let k = design.baseline_hazards.len();
    if k != structure.n_grades {
        return Err(SpatialError::Domain(format!(
            "{k} baseline hazards for {} modelled grades",
            structure.n_grades
        )));
    }
    if !(0.0..1.0).contains(&design.rho) || !(0.0..=1.0).contains(&design.lambda) {
        return Err(SpatialError::Domain("rho must lie in [0, 1) and lambda in [0, 1]".into()));
    }
    let layout = ParamLayout::new(structure);
    let mut q: Vec<f64> = (0..layout.dim).map(|_| normal(rng)).collect();
    for (j, h) in design.baseline_hazards.iter().enumerate() {
        q[layout.beta + j] = logit(*h);
    }
    let hy = layout.hyper;
    q[hy] = design.sigma_phi.ln();
    q[hy + 1] = design.sigma_nu.ln();
    q[hy + 2] = design.sigma_u.ln();
    q[hy + 3] = logit(design.lambda.clamp(1e-12, 1.0 - 1e-12));
    q[hy + 4] = design.sigma_zeta.ln();
    q[hy + 5] = logit(design.rho.max(1e-300));
    let latent = latent_of(structure, &layout, &q);

    let mut hazards = BTreeMap::new();
    for (b, &cohort) in structure.cohorts.iter().enumerate() {
        for (i, area) in structure.areas.iter().enumerate() {
            let h: Vec<f64> = (0..k).map(|g| expit(latent.eta(b, i, g))).collect();
            hazards.insert((cohort, area.clone()), h);
        }
    }

    let stratum: Arc<str> = Arc::from("all");
    let (w_lo, w_hi) = design.weight_range;
    let mut records = Vec::new();
    for (i, area) in structure.areas.iter().enumerate() {
        for c in 0..design.clusters_per_area {
            let cluster: Id = Arc::from(format!("{area}-{c}"));
            let weight = if w_hi > w_lo { rng.random_range(w_lo..w_hi) } else { w_lo };
            let urban = c % 2 == 0;
            for (b, &cohort) in structure.cohorts.iter().enumerate() {
                let mut at_risk = design.persons_per_cohort as u64;
                let mut exits = vec![0u64; k + 1];
                for (g, exit) in exits.iter_mut().enumerate().take(k) {
                    if at_risk == 0 {
                        break;
                    }
                    let h = expit(latent.eta(b, i, g));
                    let p = if design.rho > 0.0 {
                        let s = (1.0 - design.rho) / design.rho;
                        Beta::new(h * s, (1.0 - h) * s)
                            .map_err(|e| SpatialError::Domain(e.to_string()))?
                            .sample(rng)
                    } else {
                        h
                    };
                    let y = Binomial::new(at_risk, p.clamp(0.0, 1.0))
                        .map_err(|e| SpatialError::Domain(e.to_string()))?
                        .sample(rng);
                    *exit = y;
                    at_risk -= y;
                }
                exits[k] = at_risk;
                for (years, &count) in exits.iter().enumerate() {
                    for _ in 0..count {
                        records.push(PersonRecord {
                            person_id: Arc::from(format!("{cluster}-{cohort}-{}", records.len())),
                            cluster_id: cluster.clone(),
                            stratum_id: stratum.clone(),
                            weight,
                            birth_year: cohort,
                            birth_month: Some(6),
                            years_completed: years as u32,
                            censored: false,
                            area_id: area.clone(),
                            urban,
                        });
                    }
                }
            }
        }
    }
    let opts = DatasetOptions {
        k_max: Some(k as u32),
        cohort_width: 1,
        survey: Some(design.survey),
    };
    let ds = Dataset::new(records, opts).map_err(|e| SpatialError::Domain(e.to_string()))?;
    Ok((ds, SimTruth { latent, hazards }))
}
