//! Synthetic survey population with cohort trends, area and urban effects,
//! cluster heterogeneity and delayed school entry. The defaults give UYS
//! rising from about 5 to 8.5 years between the 1975 and 2000 cohorts with
//! most 15-year-olds still in school.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::censor::observe_at_survey;
use super::entrance::{next_school_start, EntranceAgeModel};
use super::SimError;
use crate::data::{Dataset, DatasetOptions, Id, PersonRecord, SurveyDate};
use crate::delta::{expit, logit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_persons: usize,
    pub survey: SurveyDate,
    pub min_age: i32,
    pub max_age: i32,
    /// Areas sit on a grid with rook adjacency.
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub clusters_per_area: usize,
    pub urban_share: f64,
    /// Entrance-age probabilities for ages 5..=15.
    pub entrance_pmf: Vec<f64>,
    pub school_start_month: u8,
    /// Hazard of leaving with `k` completed grades for the reference cohort;
    /// the last grade is terminal.
    pub baseline_hazards: Vec<f64>,
    /// Logit-scale change per birth year.
    pub cohort_trend: f64,
    pub reference_birth_year: i32,
    pub area_sd: f64,
    pub urban_effect: f64,
    pub cluster_sd: f64,
    /// Cluster weights are drawn uniformly from this range.
    pub weight_range: (f64, f64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_persons: 20_000,
            survey: SurveyDate { year: 2022, month: 6 },
            min_age: 15,
            max_age: 49,
            grid_rows: 2,
            grid_cols: 3,
            clusters_per_area: 40,
            urban_share: 0.35,
            entrance_pmf: vec![0.02, 0.15, 0.5, 0.15, 0.08, 0.04, 0.03, 0.015, 0.01, 0.005, 0.0],
            school_start_month: 1,
            baseline_hazards: vec![
                0.2, 0.02, 0.02, 0.02, 0.02, 0.03, 0.04, 0.45, 0.06, 0.06, 0.08, 0.95, 0.25, 0.95, 0.6, 0.6, 0.6, 1.0,
            ],
            cohort_trend: -0.05,
            reference_birth_year: 1985,
            area_sd: 0.25,
            urban_effect: -0.5,
            cluster_sd: 0.2,
            weight_range: (0.5, 2.0),
            seed: 20_240_101,
        }
    }
}

/// Generated survey plus what a real survey would not reveal.
#[derive(Debug, Clone)]
pub struct SyntheticPopulation {
    pub dataset: Dataset,
    pub areas: Vec<Id>,
    pub edges: Vec<(Id, Id)>,
    /// Ultimate years of schooling per record, in record order.
    pub ultimate_years: Vec<u32>,
    pub area_effects: Vec<f64>,
}

impl SyntheticPopulation {
    /// Sum of weights per area, a stand-in for population shares.
    pub fn area_population(&self) -> Vec<(Id, f64)> {
        self.areas
            .iter()
            .map(|a| {
                let w = self
                    .dataset
                    .records()
                    .iter()
                    .filter(|r| &r.area_id == a)
                    .map(|r| r.weight)
                    .sum();
                (a.clone(), w)
            })
            .collect()
    }
}

fn grid_graph(rows: usize, cols: usize) -> (Vec<Id>, Vec<(Id, Id)>) {
    let name = |r: usize, c: usize| -> Id { Arc::from(format!("area{:02}", r * cols + c)) };
    let mut areas = Vec::new();
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            areas.push(name(r, c));
            if c + 1 < cols {
                edges.push((name(r, c), name(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push((name(r, c), name(r + 1, c)));
            }
        }
    }
    (areas, edges)
}

/// Draws the population. Everything depends only on `config.seed`.
pub fn generate_population(config: &SynthConfig) -> Result<SyntheticPopulation, SimError> {
    let k = config.baseline_hazards.len();
    if k < 2 || config.baseline_hazards.iter().any(|h| !(0.0..=1.0).contains(h)) {
        return Err(SimError::Config("baseline hazards must be probabilities, at least two grades".into()));
    }
    if config.min_age > config.max_age || config.grid_rows * config.grid_cols == 0 || config.clusters_per_area == 0 {
        return Err(SimError::Config("empty age range, grid or cluster layout".into()));
    }
    let entrance = EntranceAgeModel::new(config.entrance_pmf.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (areas, edges) = grid_graph(config.grid_rows, config.grid_cols);
    let area_effects: Vec<f64> = areas
        .iter()
        .map(|_| config.area_sd * rng.sample::<f64, _>(StandardNormal))
        .collect();

    struct Cluster {
        id: Id,
        area: usize,
        urban: bool,
        effect: f64,
        weight: f64,
    }
    let (w_lo, w_hi) = config.weight_range;
    let mut clusters = Vec::new();
    for (a, area) in areas.iter().enumerate() {
        for c in 0..config.clusters_per_area {
            let urban = rng.random::<f64>() < config.urban_share;
            clusters.push(Cluster {
                id: Arc::from(format!("{area}-c{c:03}")),
                area: a,
                urban,
                effect: config.cluster_sd * rng.sample::<f64, _>(StandardNormal),
                weight: if w_hi > w_lo { rng.random_range(w_lo..w_hi) } else { w_lo },
            });
        }
    }

    let base_logits: Vec<f64> = config.baseline_hazards[..k - 1].iter().map(|&h| logit(h)).collect();
    let survey_month = config.survey.month_index();
    let span = (config.max_age - config.min_age + 1) as i64 * 12;
    let youngest = survey_month - i64::from(config.min_age) * 12;
    let mut records = Vec::with_capacity(config.n_persons);
    let mut ultimate_years = Vec::with_capacity(config.n_persons);
    for p in 0..config.n_persons {
        let cl = &clusters[p % clusters.len()];
        let birth = youngest - rng.random_range(0..span);
        let birth_year = birth.div_euclid(12) as i32;
        let shift = config.cohort_trend * f64::from(birth_year - config.reference_birth_year)
            + area_effects[cl.area]
            + if cl.urban { config.urban_effect } else { 0.0 }
            + cl.effect;
        let mut years = (k - 1) as u32;
        for (g, b) in base_logits.iter().enumerate() {
            if rng.random::<f64>() < expit(b + shift) {
                years = g as u32;
                break;
            }
        }
        let e = entrance.sample(&mut rng);
        let entry = next_school_start(birth + 12 * i64::from(e), config.school_start_month);
        // leaving before the top grade happens at some point of the next
        // school year
        let dropout = if (years as usize) < k - 1 { rng.random_range(0..12) } else { 0 };
        let exit = entry + 12 * i64::from(years) + dropout;
        let obs = observe_at_survey(entry, exit, years, survey_month);
        records.push(PersonRecord {
            person_id: Arc::from(format!("p{p:06}")),
            cluster_id: cl.id.clone(),
            stratum_id: Arc::from(format!("{}-{}", areas[cl.area], if cl.urban { "u" } else { "r" })),
            weight: cl.weight,
            birth_year,
            birth_month: Some((birth.rem_euclid(12) + 1) as u8),
            years_completed: obs.years,
            censored: obs.censored,
            area_id: areas[cl.area].clone(),
            urban: cl.urban,
        });
        ultimate_years.push(years);
    }
    let dataset = Dataset::new(
        records,
        DatasetOptions {
            k_max: Some((k - 1) as u32),
            cohort_width: 1,
            survey: Some(config.survey),
        },
    )?;
    Ok(SyntheticPopulation {
        dataset,
        areas,
        edges,
        ultimate_years,
        area_effects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_population_shape() {
        let cfg = SynthConfig {
            n_persons: 6000,
            ..SynthConfig::default()
        };
        let pop = generate_population(&cfg).unwrap();
        let ds = &pop.dataset;
        assert_eq!(ds.records().len(), 6000);
        assert_eq!(pop.areas.len(), 6);
        assert_eq!(pop.edges.len(), 7);
        let ages: Vec<i32> = ds.records().iter().map(|r| ds.age_at_survey(r).unwrap()).collect();
        assert!(ages.iter().all(|a| (15..=49).contains(a)));
        // most 15-year-olds in school, almost nobody over 30
        let share = |lo: i32, hi: i32| {
            let v: Vec<bool> = ds
                .records()
                .iter()
                .zip(&ages)
                .filter(|(_, a)| (lo..=hi).contains(*a))
                .map(|(r, _)| r.censored)
                .collect();
            v.iter().filter(|&&c| c).count() as f64 / v.len() as f64
        };
        assert!(share(15, 15) > 0.6, "{}", share(15, 15));
        assert!(share(30, 49) < 0.01);
        // observed never exceeds ultimate
        assert!(ds
            .records()
            .iter()
            .zip(&pop.ultimate_years)
            .all(|(r, &t)| r.years_completed <= t && (r.censored || r.years_completed == t)));
    }

    #[test]
    fn seeded() {
        let cfg = SynthConfig {
            n_persons: 500,
            ..SynthConfig::default()
        };
        let a = generate_population(&cfg).unwrap();
        let b = generate_population(&cfg).unwrap();
        assert_eq!(a.dataset.records(), b.dataset.records());
    }
}
