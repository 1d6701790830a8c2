//! Bias study: censor one age group at a time, re-estimate UYS per birth
//! year and compare with the naive weighted estimate from the full data.

use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::censor::{simulate_censoring, year_age, SimScenario};
use super::entrance::EntranceAgeModel;
use super::SimError;
use crate::data::{expand_risk_rows, Dataset, DatasetOptions, Id};
use crate::delta::uys_from_hazard_slice;
use crate::design::DesignIndex;
use crate::glm::{fit_survey_glm, GlmSpec, GlmTarget};
use crate::spatial::{
    build_cells, build_latent_structure, fit_mcmc, grades_needed, posterior_uys_weighted, McmcConfig, SpatialGraph,
};
use crate::weighted::{modified_weighted_uys, naive_weighted_uys_indexed, Domain, Method};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasStudyConfig {
    pub scenarios: Vec<SimScenario>,
    pub replicates: usize,
    pub seed: u64,
    pub estimators: Vec<Method>,
    pub school_start_month: u8,
}

impl Default for BiasStudyConfig {
    fn default() -> Self {
        Self {
            scenarios: vec![
                SimScenario::new(25, 29, 10),
                SimScenario::new(30, 34, 15),
                SimScenario::new(35, 39, 20),
                SimScenario::new(40, 44, 25),
            ],
            replicates: 10,
            seed: 1,
            estimators: vec![Method::Naive, Method::Modified, Method::Glm],
            school_start_month: 1,
        }
    }
}

/// What the spatial estimator needs in the bias study: the area graph, the
/// population weights used to aggregate areas, and the chain settings.
#[derive(Debug, Clone)]
pub struct SpatialSetup {
    pub graph: SpatialGraph,
    pub area_weights: Vec<(Id, f64)>,
    pub mcmc: McmcConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRecord {
    pub scenario: String,
    pub replicate: usize,
    pub birth_year: i32,
    pub age_at_censoring: i32,
    pub method: Method,
    pub estimate: f64,
    pub truth: f64,
    pub bias: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasSection {
    Overall,
    AgeAtCensoring,
    AgeGroup,
}

impl BiasSection {
    fn as_str(self) -> &'static str {
        match self {
            BiasSection::Overall => "overall",
            BiasSection::AgeAtCensoring => "age_at_censoring",
            BiasSection::AgeGroup => "age_group",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasRow {
    pub section: BiasSection,
    pub label: String,
    /// Mean bias per method, in report column order.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasReport {
    pub methods: Vec<Method>,
    pub scenarios: Vec<SimScenario>,
    pub records: Vec<BiasRecord>,
}

impl BiasReport {
    fn mean_where(&self, method: Method, keep: impl Fn(&BiasRecord) -> bool) -> Option<f64> {
        let v: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.method == method && keep(r))
            .map(|r| r.bias)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn average_bias(&self, method: Method) -> Option<f64> {
        self.mean_where(method, |_| true)
    }

    pub fn bias_at_censoring_age(&self, method: Method, age: i32) -> Option<f64> {
        self.mean_where(method, |r| r.age_at_censoring == age)
    }

    pub fn bias_for_group(&self, method: Method, group: &str) -> Option<f64> {
        self.mean_where(method, |r| r.scenario == group)
    }

    /// Rows in the order: overall average, each age at censoring, each age
    /// group.
    pub fn table(&self) -> Vec<BiasRow> {
        let row = |section, label: String, f: &dyn Fn(Method) -> Option<f64>| BiasRow {
            section,
            label,
            values: self.methods.iter().map(|&m| f(m)).collect(),
        };
        let mut rows = vec![row(BiasSection::Overall, "average".into(), &|m| self.average_bias(m))];
        let mut ages: Vec<i32> = self.records.iter().map(|r| r.age_at_censoring).collect();
        ages.sort_unstable();
        ages.dedup();
        for a in ages {
            rows.push(row(BiasSection::AgeAtCensoring, a.to_string(), &|m| {
                self.bias_at_censoring_age(m, a)
            }));
        }
        for s in &self.scenarios {
            let label = s.label();
            rows.push(row(BiasSection::AgeGroup, label.clone(), &|m| self.bias_for_group(m, &label)));
        }
        rows
    }

    pub fn write_table<W: Write>(&self, writer: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["section".to_string(), "label".to_string()];
        header.extend(self.methods.iter().map(|m| m.to_string()));
        w.write_record(&header)?;
        for r in self.table() {
            let mut rec = vec![r.section.as_str().to_string(), r.label];
            rec.extend(r.values.iter().map(|v| v.map_or(String::new(), |x| format!("{x:.6}"))));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_records<W: Write>(&self, writer: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Random stream for one (scenario, replicate) pair, independent of the
/// order in which pairs are run.
pub fn replicate_rng(seed: u64, scenario: usize, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((scenario as u64) << 32) | replicate as u64);
    rng
}

fn by_birth_year(ds: &Dataset) -> Result<Dataset, SimError> {
    if ds.cohort_width() == 1 {
        return Ok(ds.clone());
    }
    Ok(Dataset::new(
        ds.records().to_vec(),
        DatasetOptions {
            cohort_width: 1,
            ..ds.options()
        },
    )?)
}

fn estimate_all(
    ds: &Dataset,
    years: &[i32],
    methods: &[Method],
    spatial: Option<&SpatialSetup>,
) -> Result<BTreeMap<(Method, i32), f64>, SimError> {
    let mut out = BTreeMap::new();
    let index = DesignIndex::from_records(ds.records());
    let rows = expand_risk_rows(ds);
    for &m in methods {
        match m {
            Method::Naive => {
                for &b in years {
                    let e = naive_weighted_uys_indexed(ds, &Domain::cohort(b), &index)?;
                    out.insert((m, b), e.mean);
                }
            }
            Method::Modified => {
                for &b in years {
                    let e = modified_weighted_uys(&rows, &Domain::cohort(b), ds.k_max(), &index)?;
                    out.insert((m, b), e.mean);
                }
            }
            Method::Glm => {
                let fit = fit_survey_glm(&rows, &GlmSpec::cohort_only(years[0]))?;
                for &b in years {
                    let h = fit.hazards(&GlmTarget { cohort: b, area: None })?;
                    out.insert((m, b), uys_from_hazard_slice(&h));
                }
            }
            Method::Spatial => {
                let setup = spatial.ok_or_else(|| {
                    SimError::Config("the spatial estimator needs a graph and area weights".into())
                })?;
                let cells = build_cells(&rows);
                let structure = build_latent_structure(&setup.graph, &ds.cohorts(), grades_needed(&cells))?;
                let pd = fit_mcmc(&cells, &structure, &setup.mcmc)?;
                let weights: Vec<(&str, f64)> = setup.area_weights.iter().map(|(a, w)| (a.as_ref(), *w)).collect();
                for &b in years {
                    let (e, _) = posterior_uys_weighted(&pd, b, &weights, None)?;
                    out.insert((m, b), e.mean);
                }
            }
        }
    }
    Ok(out)
}

/// Runs every scenario `replicates` times. Truth is the naive weighted UYS
/// of each birth year in the uncensored data.
pub fn run_bias_study(
    ds: &Dataset,
    model: &EntranceAgeModel,
    config: &BiasStudyConfig,
    spatial: Option<&SpatialSetup>,
) -> Result<BiasReport, SimError> {
    if config.replicates == 0 || config.scenarios.is_empty() || config.estimators.is_empty() {
        return Err(SimError::Config("need at least one scenario, replicate and estimator".into()));
    }
    let ds = by_birth_year(ds)?;
    let survey = ds
        .survey()
        .ok_or_else(|| SimError::Config("the dataset has no survey date".into()))?;
    let mut methods = config.estimators.clone();
    methods.sort();
    methods.dedup();

    let mut records = Vec::new();
    for (s, scenario) in config.scenarios.iter().enumerate() {
        scenario.validate()?;
        let years: Vec<i32> = ds
            .cohorts()
            .into_iter()
            .filter(|&b| scenario.contains_age(year_age(survey, b)))
            .collect();
        if years.is_empty() {
            log::warn!("nobody aged {} in the data; scenario skipped", scenario.label());
            continue;
        }
        let truth = estimate_all(&ds, &years, &[Method::Naive], None)?;
        for rep in 0..config.replicates {
            let mut rng = replicate_rng(config.seed, s, rep);
            let censored = simulate_censoring(&ds, model, scenario, config.school_start_month, &mut rng)?;
            let est = estimate_all(&censored, &years, &methods, spatial)
                .map_err(|e| SimError::Scenario(format!("{} replicate {rep}: {e}", scenario.label())))?;
            for &b in &years {
                let t = truth[&(Method::Naive, b)];
                for &m in &methods {
                    let e = est[&(m, b)];
                    records.push(BiasRecord {
                        scenario: scenario.label(),
                        replicate: rep,
                        birth_year: b,
                        age_at_censoring: year_age(survey, b) - scenario.survey_shift_years,
                        method: m,
                        estimate: e,
                        truth: t,
                        bias: e - t,
                    });
                }
            }
        }
    }
    Ok(BiasReport {
        methods,
        scenarios: config.scenarios.clone(),
        records,
    })
}
