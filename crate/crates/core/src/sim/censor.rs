//! Artificial end-of-study censoring: move the survey date back so one age
//! group is caught mid-schooling, and record what it would have reported.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::entrance::{birth_month_index, next_school_start, EntranceAgeModel};
use super::SimError;
use crate::data::{Dataset, PersonRecord, SurveyDate};

/// Youngest age at which respondents are sampled.
pub const MIN_SURVEY_AGE: i32 = 15;

/// One censoring scenario. Ages are `survey year - birth year`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimScenario {
    pub target_age_group: (i32, i32),
    #[serde(alias = "shift")]
    pub survey_shift_years: i32,
}

impl SimScenario {
    pub fn new(lo: i32, hi: i32, shift: i32) -> Self {
        Self {
            target_age_group: (lo, hi),
            survey_shift_years: shift,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let (lo, hi) = self.target_age_group;
        if lo > hi {
            return Err(SimError::Config(format!("age group {lo}-{hi} is empty")));
        }
        if self.survey_shift_years < 0 {
            return Err(SimError::Config(format!(
                "survey shift {} is negative",
                self.survey_shift_years
            )));
        }
        if lo - self.survey_shift_years < MIN_SURVEY_AGE {
            return Err(SimError::Config(format!(
                "shifting {lo}-{hi} back {} years puts it below age {MIN_SURVEY_AGE}",
                self.survey_shift_years
            )));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.target_age_group.0, self.target_age_group.1)
    }

    pub fn contains_age(&self, age: i32) -> bool {
        (self.target_age_group.0..=self.target_age_group.1).contains(&age)
    }
}

/// Outcome of exposing one schooling history to a survey at `survey_month`.
/// `entry` is the month index of school entry; the history ends after
/// `years` full school years.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observed {
    pub years: u32,
    pub censored: bool,
}

/// Censoring as a survey sees it. Someone with `years` completed grades
/// leaves school at `exit`, which may fall during the following school year
/// (a dropout before finishing it). Anyone leaving strictly after the survey
/// is still in school and reports whole completed years.
pub fn observe_at_survey(entry: i64, exit: i64, years: u32, survey_month: i64) -> Observed {
    if exit <= survey_month {
        return Observed { years, censored: false };
    }
    let done = (survey_month - entry).max(0).div_euclid(12) as u32;
    Observed {
        years: done.min(years),
        censored: true,
    }
}

/// Censoring for the simulation, where schooling ends exactly at
/// `entry + 12 * years`. Completed years only exist in whole grades, so the
/// censoring point moves to the end of the current school year and that
/// year counts as completed.
pub fn observe_postponed(entry: i64, years: u32, survey_month: i64) -> Observed {
    let exit = entry + 12 * i64::from(years);
    if exit <= survey_month {
        return Observed { years, censored: false };
    }
    let elapsed = survey_month - entry;
    let done = if elapsed <= 0 { 0 } else { ((elapsed + 11) / 12) as u32 };
    Observed {
        years: done.min(years),
        censored: true,
    }
}

/// Survey age used for scenario membership.
pub fn year_age(survey: SurveyDate, birth_year: i32) -> i32 {
    survey.year - birth_year
}

/// Draws entrance ages for the target group and re-observes its members at
/// the shifted survey date. Other records are untouched. Missing birth
/// months are drawn uniformly. Someone still in school at the real survey is
/// still in school at the earlier date, with completed grades capped by the
/// time elapsed since entry.
pub fn simulate_censoring(
    ds: &Dataset,
    model: &EntranceAgeModel,
    scenario: &SimScenario,
    school_start_month: u8,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset, SimError> {
    scenario.validate()?;
    if !(1..=12).contains(&school_start_month) {
        return Err(SimError::Config(format!("school start month {school_start_month}")));
    }
    let survey = ds
        .survey()
        .ok_or_else(|| SimError::Config("the dataset has no survey date".into()))?;
    let shifted = survey.month_index() - 12 * i64::from(scenario.survey_shift_years);
    let records: Vec<PersonRecord> = ds
        .records()
        .iter()
        .map(|r| {
            if !scenario.contains_age(year_age(survey, r.birth_year)) {
                return r.clone();
            }
            let e = model.sample(rng);
            let birth = match r.birth_month {
                Some(_) => birth_month_index(r),
                None => i64::from(r.birth_year) * 12 + rng.random_range(0..12),
            };
            let entry = next_school_start(birth + 12 * i64::from(e), school_start_month);
            let obs = observe_postponed(entry, r.years_completed, shifted);
            let mut out = r.clone();
            out.years_completed = obs.years;
            out.censored = obs.censored || r.censored;
            out
        })
        .collect();
    Ok(ds.with_records(records)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_arithmetic_example() {
        // born 1997, entered January 2004 at 7, 12 years of schooling,
        // survey moved to January 2012: exit 2016 is later, 8 years done
        let entry = 2004 * 12;
        let o = observe_postponed(entry, 12, 2012 * 12);
        assert_eq!(o, Observed { years: 8, censored: true });
        // a month into the ninth year counts that year as done
        assert_eq!(observe_postponed(entry, 12, 2012 * 12 + 1).years, 9);
        // final year in progress: all grades counted, still censored
        assert_eq!(observe_postponed(entry, 12, 2015 * 12 + 3), Observed { years: 12, censored: true });
        // exit before the survey is unchanged; a tie is not censored
        assert_eq!(observe_postponed(entry, 5, 2012 * 12), Observed { years: 5, censored: false });
        assert_eq!(observe_postponed(entry, 8, 2012 * 12), Observed { years: 8, censored: false });
        // not yet started
        assert_eq!(observe_postponed(entry, 3, entry - 5), Observed { years: 0, censored: true });
    }

    #[test]
    fn survey_observation_floors() {
        let entry = 2004 * 12;
        let survey = 2012 * 12 + 11;
        assert_eq!(observe_at_survey(entry, entry + 144, 12, survey), Observed { years: 8, censored: true });
        assert_eq!(observe_at_survey(entry, entry + 24, 2, survey), Observed { years: 2, censored: false });
        // dropped out during the ninth year, after the survey: still in school with 8
        assert_eq!(observe_at_survey(entry, survey + 1, 8, survey), Observed { years: 8, censored: true });
    }

    #[test]
    fn scenario_validation() {
        assert!(SimScenario::new(25, 29, 10).validate().is_ok());
        assert!(SimScenario::new(45, 49, 0).validate().is_ok());
        assert!(SimScenario::new(25, 29, 11).validate().is_err());
        assert!(SimScenario::new(25, 29, -1).validate().is_err());
        assert!(SimScenario::new(30, 25, 0).validate().is_err());
    }
}
