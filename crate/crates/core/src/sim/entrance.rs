//! School-entrance age model. The reverse entrance age `E* = 15 - floor(E)`
//! is right-censored exactly when schooling is complete, so it is estimated
//! with weighted discrete-time hazards like years of schooling.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::data::{Dataset, PersonRecord, SurveyDate};

pub const MIN_ENTRANCE_AGE: u32 = 5;
pub const MAX_ENTRANCE_AGE: u32 = 15;
const SUPPORT: usize = (MAX_ENTRANCE_AGE - MIN_ENTRANCE_AGE + 1) as usize;

/// Distribution of whole-year entrance ages over `5..=15`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntranceAgeModel {
    pmf: Vec<f64>,
}

impl EntranceAgeModel {
    /// `pmf[j]` is the probability of entering at age `5 + j`; it is
    /// renormalized.
    pub fn new(pmf: Vec<f64>) -> Result<Self, SimError> {
        if pmf.len() != SUPPORT {
            return Err(SimError::Config(format!(
                "entrance pmf needs {SUPPORT} entries for ages {MIN_ENTRANCE_AGE}..={MAX_ENTRANCE_AGE}, got {}",
                pmf.len()
            )));
        }
        if pmf.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(SimError::Config("entrance pmf has a negative or non-finite entry".into()));
        }
        let total: f64 = pmf.iter().sum();
        if !(total > 0.0) {
            return Err(SimError::Config("entrance pmf is all zero".into()));
        }
        Ok(Self {
            pmf: pmf.into_iter().map(|p| p / total).collect(),
        })
    }

    pub fn point_mass(age: u32) -> Result<Self, SimError> {
        if !(MIN_ENTRANCE_AGE..=MAX_ENTRANCE_AGE).contains(&age) {
            return Err(SimError::Config(format!("entrance age {age} outside 5..=15")));
        }
        let mut pmf = vec![0.0; SUPPORT];
        pmf[(age - MIN_ENTRANCE_AGE) as usize] = 1.0;
        Self::new(pmf)
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn probability(&self, age: u32) -> f64 {
        age.checked_sub(MIN_ENTRANCE_AGE)
            .and_then(|j| self.pmf.get(j as usize))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(j, p)| p * f64::from(MIN_ENTRANCE_AGE + j as u32))
            .sum()
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> u32 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (j, p) in self.pmf.iter().enumerate() {
            acc += p;
            if u < acc {
                return MIN_ENTRANCE_AGE + j as u32;
            }
        }
        // rounding left u above the cumulative total
        MIN_ENTRANCE_AGE + self.pmf.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u32
    }

    pub fn total_variation(&self, other: &Self) -> f64 {
        0.5 * self.pmf.iter().zip(&other.pmf).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

/// Month index (`12 * year + month - 1`) of the first school start on or
/// after the given month.
pub fn next_school_start(month_index: i64, start_month: u8) -> i64 {
    let offset = (i64::from(start_month) - 1 - month_index.rem_euclid(12)).rem_euclid(12);
    month_index + offset
}

/// Month index of birth, reading an unknown month as June.
pub fn birth_month_index(r: &PersonRecord) -> i64 {
    i64::from(r.birth_year) * 12 + i64::from(r.birth_month.unwrap_or(6)) - 1
}

/// Completed age at the most recent school start on or before the survey.
/// Entry always happens at a school start, so this age minus completed
/// grades is the whole-year entrance age.
pub fn age_at_last_school_start(r: &PersonRecord, survey: SurveyDate, start_month: u8) -> i64 {
    let s = survey.month_index();
    let start = next_school_start(s - 11, start_month);
    (start - birth_month_index(r)).div_euclid(12)
}

/// Reverse entrance age observation `(E*, exact)` for someone of `age` with
/// `years` completed grades. In school: the entrance age is `age - years`.
/// Out of school: it is at most that, so `E*` is right-censored. Ages are
/// clipped to the support. `None` when the record carries no information.
pub fn reverse_entrance_observation(age: i64, years: u32, in_school: bool) -> Option<(u32, bool)> {
    let bound = age - i64::from(years);
    let top = i64::from(MAX_ENTRANCE_AGE - MIN_ENTRANCE_AGE);
    let e_star = i64::from(MAX_ENTRANCE_AGE) - bound;
    if in_school {
        Some((e_star.clamp(0, top) as u32, true))
    } else if e_star >= top {
        // entering before age 5 is outside the support
        Some((top as u32, true))
    } else if e_star <= 0 {
        None
    } else {
        Some((e_star as u32, false))
    }
}

/// Fits the entrance distribution from respondents aged 15-29 with some
/// schooling, using design-weighted hazards of `E*`.
pub fn fit_entrance_model(ds: &Dataset, start_month: u8) -> Result<EntranceAgeModel, SimError> {
    let survey = ds
        .survey()
        .ok_or_else(|| SimError::Config("the dataset has no survey date".into()))?;
    let top = (MAX_ENTRANCE_AGE - MIN_ENTRANCE_AGE) as usize;
    let mut risk = vec![0.0; top + 1];
    let mut events = vec![0.0; top + 1];
    let mut used = 0;
    for r in ds.records() {
        let Some(age) = ds.age_at_survey(r) else { continue };
        if !(15..=29).contains(&age) || r.years_completed == 0 {
            continue;
        }
        let a = age_at_last_school_start(r, survey, start_month);
        let Some((e_star, exact)) = reverse_entrance_observation(a, r.years_completed, r.censored) else {
            continue;
        };
        used += 1;
        let e = e_star as usize;
        let last = if exact { e + 1 } else { e };
        for slot in &mut risk[..last] {
            *slot += r.weight;
        }
        if exact {
            events[e] += r.weight;
        }
    }
    if used == 0 {
        return Err(SimError::NoData("no respondents aged 15-29 with schooling".into()));
    }
    // pmf of E*; an empty risk set passes all remaining mass forward
    let mut surv = 1.0;
    let mut pmf_star = vec![0.0; top + 1];
    for j in 0..top {
        let h = if risk[j] > 0.0 { events[j] / risk[j] } else { 0.0 };
        pmf_star[j] = surv * h;
        surv *= 1.0 - h;
    }
    pmf_star[top] = surv;
    // floor(E) = 15 - E*
    EntranceAgeModel::new(pmf_star.into_iter().rev().collect())
}
