//! Design-weighted UYS estimators: the naive weighted mean of completed
//! years and the modified estimator built from weighted discrete-time
//! hazards, with linearization variances and delta-method intervals.

use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset, Id, PersonRecord, RiskRow};
use crate::delta::{self, DeltaError};
use crate::design::DesignIndex;

/// Two-sided 90% normal quantile.
pub const Z90: f64 = 1.644_853_626_951_472_2;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("no sampled persons in domain {0}")]
    NoData(Domain),
    #[error(transparent)]
    Delta(#[from] DeltaError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Naive,
    Modified,
    Glm,
    Spatial,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Naive, Method::Modified, Method::Glm, Method::Spatial];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Modified => "modified",
            Method::Glm => "glm",
            Method::Spatial => "spatial",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "naive" => Ok(Method::Naive),
            "modified" => Ok(Method::Modified),
            "glm" => Ok(Method::Glm),
            "spatial" => Ok(Method::Spatial),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

/// A cohort, optionally restricted to one area and/or one urban stratum.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Domain {
    pub cohort: i32,
    pub area: Option<Id>,
    pub urban: Option<bool>,
}

impl Domain {
    pub fn cohort(cohort: i32) -> Self {
        Self {
            cohort,
            area: None,
            urban: None,
        }
    }

    pub fn with_area(mut self, area: impl Into<Id>) -> Self {
        self.area = Some(area.into());
        self
    }

    pub fn with_urban(mut self, urban: bool) -> Self {
        self.urban = Some(urban);
        self
    }

    fn matches(&self, cohort: i32, area: &str, urban: bool) -> bool {
        cohort == self.cohort
            && self.area.as_deref().is_none_or(|a| a == area)
            && self.urban.is_none_or(|u| u == urban)
    }

    pub fn contains_row(&self, row: &RiskRow) -> bool {
        self.matches(row.cohort, &row.area_id, row.urban)
    }

    pub fn contains_person(&self, ds: &Dataset, r: &PersonRecord) -> bool {
        self.matches(ds.cohort_of(r.birth_year), &r.area_id, r.urban)
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cohort {}", self.cohort)?;
        if let Some(a) = &self.area {
            write!(f, ", area {a}")?;
        }
        if let Some(u) = self.urban {
            write!(f, ", {}", if u { "urban" } else { "rural" })?;
        }
        Ok(())
    }
}

/// Point estimate of UYS with its uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UysEstimate {
    pub mean: f64,
    pub se: f64,
    pub ci90: (f64, f64),
    pub n_eff: usize,
    pub method: Method,
    /// Survival was cut to zero past the highest observed grade.
    pub truncated: bool,
}

impl UysEstimate {
    /// Normal-approximation interval `mean +/- z * se`.
    pub fn normal(mean: f64, se: f64, z: f64, n_eff: usize, method: Method) -> Self {
        Self {
            mean,
            se,
            ci90: (mean - z * se, mean + z * se),
            n_eff,
            method,
            truncated: false,
        }
    }

    pub fn ci_width(&self) -> f64 {
        self.ci90.1 - self.ci90.0
    }
}

/// Grade-indexed hazards `h_0..=h_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardCurve {
    pub hazards: Vec<f64>,
    pub cov: Option<DMatrix<f64>>,
    /// False where the risk set was empty.
    pub defined: Vec<bool>,
    pub n_eff: usize,
}

impl HazardCurve {
    pub fn k_max(&self) -> usize {
        self.hazards.len().saturating_sub(1)
    }

    /// Highest grade with a non-empty risk set.
    pub fn last_defined(&self) -> Option<usize> {
        self.defined.iter().rposition(|&d| d)
    }
}

/// `S(0..=K)` with the covariance of `S(1..=K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    pub surv: Vec<f64>,
    pub cov: Option<DMatrix<f64>>,
    pub truncated: bool,
    /// Grades whose empty risk set was read as a zero hazard.
    pub carried_forward: Vec<usize>,
    pub n_eff: usize,
}

impl SurvivalCurve {
    pub fn k_max(&self) -> usize {
        self.surv.len() - 1
    }
}

/// Weighted mean of completed years within a domain.
pub fn naive_weighted_uys(ds: &Dataset, domain: &Domain) -> Result<UysEstimate, EstimateError> {
    let index = DesignIndex::from_records(ds.records());
    naive_weighted_uys_indexed(ds, domain, &index)
}

pub fn naive_weighted_uys_indexed(
    ds: &Dataset,
    domain: &Domain,
    index: &DesignIndex,
) -> Result<UysEstimate, EstimateError> {
    let members: Vec<&PersonRecord> = ds
        .records()
        .iter()
        .filter(|r| domain.contains_person(ds, r))
        .collect();
    if members.is_empty() {
        return Err(EstimateError::NoData(domain.clone()));
    }
    let total_w: f64 = members.iter().map(|r| r.weight).sum();
    let mean = members
        .iter()
        .map(|r| r.weight * f64::from(r.years_completed))
        .sum::<f64>()
        / total_w;

    // Ratio linearization: z_j = w_j (t_j - mean) / sum w, zero outside the domain.
    let mut totals = vec![0.0; index.n_clusters()];
    for r in &members {
        let c = index
            .cluster_index(&r.cluster_id)
            .expect("design index covers the dataset");
        totals[c] += r.weight * (f64::from(r.years_completed) - mean) / total_w;
    }
    let var = index.variance(&totals, true);
    Ok(UysEstimate::normal(
        mean,
        var.max(0.0).sqrt(),
        Z90,
        members.len(),
        Method::Naive,
    ))
}

/// Weighted hazards over the risk sets of `domain`, for grades `0..=k_max`.
pub fn modified_weighted_hazards(rows: &[RiskRow], domain: &Domain, k_max: u32) -> HazardCurve {
    let index = DesignIndex::from_rows(rows);
    modified_weighted_hazards_indexed(rows, domain, k_max, &index)
}

pub fn modified_weighted_hazards_indexed(
    rows: &[RiskRow],
    domain: &Domain,
    k_max: u32,
    index: &DesignIndex,
) -> HazardCurve {
    let k = k_max as usize + 1;
    let mut risk_w = vec![0.0; k];
    let mut event_w = vec![0.0; k];
    let mut n_eff = 0;
    let members: Vec<&RiskRow> = rows.iter().filter(|r| domain.contains_row(r)).collect();
    for r in &members {
        let g = r.grade as usize;
        risk_w[g] += r.weight;
        if r.event {
            event_w[g] += r.weight;
        }
        if g == 0 {
            n_eff += 1;
        }
    }
    let defined: Vec<bool> = risk_w.iter().map(|&w| w > 0.0).collect();
    let hazards: Vec<f64> = risk_w
        .iter()
        .zip(&event_w)
        .map(|(&n, &e)| if n > 0.0 { e / n } else { 0.0 })
        .collect();

    let mut totals = DMatrix::<f64>::zeros(index.n_clusters(), k);
    for r in &members {
        let g = r.grade as usize;
        let c = index
            .cluster_index(&r.cluster_id)
            .expect("design index covers the rows");
        let z = if r.event { 1.0 } else { 0.0 };
        totals[(c, g)] += r.weight * (z - hazards[g]) / risk_w[g];
    }
    let cov = index.covariance(&totals, true).cov;

    HazardCurve {
        hazards,
        cov: Some(cov),
        defined,
        n_eff,
    }
}

/// Survival curve from hazards. Empty risk sets below the highest defined
/// grade count as zero hazard; survival past the grade after that is zero.
pub fn survival_from_hazards(h: &HazardCurve) -> SurvivalCurve {
    let k_max = h.k_max();
    let Some(last) = h.last_defined() else {
        let mut surv = vec![0.0; k_max + 1];
        surv[0] = 1.0;
        return SurvivalCurve {
            surv,
            cov: h.cov.as_ref().map(|_| DMatrix::zeros(k_max, k_max)),
            truncated: k_max > 0,
            carried_forward: Vec::new(),
            n_eff: h.n_eff,
        };
    };
    let carried_forward: Vec<usize> = (0..last).filter(|&g| !h.defined[g]).collect();
    if !carried_forward.is_empty() {
        log::debug!("empty risk sets at grades {carried_forward:?} read as zero hazard");
    }
    let effective: Vec<f64> = (0..=last)
        .map(|g| if h.defined[g] { h.hazards[g] } else { 0.0 })
        .collect();
    let horizon = (last + 1).min(k_max);
    let partial = delta::survival_from_hazard_slice(&effective);
    let mut surv = vec![0.0; k_max + 1];
    surv[..=horizon].copy_from_slice(&partial[..=horizon]);
    let truncated = horizon < k_max && surv[horizon] > 0.0;

    let cov = h.cov.as_ref().map(|hc| {
        let mut jac = DMatrix::<f64>::zeros(k_max, k_max + 1);
        for t in 1..=horizon {
            let g = delta::survival_gradient_hazards(&effective, t);
            for (j, v) in g.into_iter().enumerate() {
                jac[(t - 1, j)] = v;
            }
        }
        &jac * hc * jac.transpose()
    });

    SurvivalCurve {
        surv,
        cov,
        truncated,
        carried_forward,
        n_eff: h.n_eff,
    }
}

/// UYS as the sum of `S(1..=K)`; the standard error sums the survival covariance.
pub fn uys_from_survival(s: &SurvivalCurve, method: Method) -> UysEstimate {
    let mean: f64 = s.surv.iter().skip(1).sum();
    let se = s.cov.as_ref().map_or(0.0, |c| c.sum().max(0.0).sqrt());
    let mut est = UysEstimate::normal(mean, se, Z90, s.n_eff, method);
    est.truncated = s.truncated;
    if s.truncated {
        log::debug!("UYS truncated at the highest observed grade; the estimate is a restricted mean");
    }
    est
}

/// Modified weighted UYS for a domain.
pub fn modified_weighted_uys(
    rows: &[RiskRow],
    domain: &Domain,
    k_max: u32,
    index: &DesignIndex,
) -> Result<UysEstimate, EstimateError> {
    let h = modified_weighted_hazards_indexed(rows, domain, k_max, index);
    if h.n_eff == 0 {
        return Err(EstimateError::NoData(domain.clone()));
    }
    Ok(uys_from_survival(&survival_from_hazards(&h), Method::Modified))
}

/// One line of an estimates table.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRecord {
    pub domain: Domain,
    pub estimate: UysEstimate,
}

pub fn write_estimates<W: Write>(records: &[EstimateRecord], writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "cohort",
        "area",
        "urban",
        "method",
        "mean",
        "se",
        "ci_lo",
        "ci_hi",
        "n_eff",
        "truncated_flag",
    ])?;
    for r in records {
        let e = &r.estimate;
        w.write_record([
            r.domain.cohort.to_string(),
            r.domain.area.as_deref().unwrap_or("").to_string(),
            r.domain.urban.map_or(String::new(), |u| u8::from(u).to_string()),
            e.method.to_string(),
            e.mean.to_string(),
            e.se.to_string(),
            e.ci90.0.to_string(),
            e.ci90.1.to_string(),
            e.n_eff.to_string(),
            u8::from(e.truncated).to_string(),
        ])?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: "<output>".into(),
        source,
    })?;
    Ok(())
}
