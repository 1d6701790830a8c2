//! Survey microdata: person records, dataset validation, and expansion of
//! schooling histories into person-grade Bernoulli risk rows.
//!
//! A respondent with `t` completed years contributes one row per grade
//! interval `0..t`; when their schooling is finished (not censored) they also
//! contribute the interval `t` in which they left, with `event = true`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Shared, cheaply clonable identifier.
pub type Id = Arc<str>;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: invalid value {value:?} in column `{column}`")]
    InvalidValue {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}: weight must be positive, got {weight}")]
    NonPositiveWeight { line: u64, weight: f64 },
    #[error("duplicate person_id `{0}`")]
    DuplicatePerson(String),
    #[error(
        "cluster `{cluster}` maps to more than one (stratum, area, urban) triple: \
         ({first}) and ({second})"
    )]
    InconsistentCluster {
        cluster: String,
        first: String,
        second: String,
    },
    #[error("person `{person}` has {years} completed years, above k_max {k_max}")]
    ExceedsKMax {
        person: String,
        years: u32,
        k_max: u32,
    },
    #[error("no records")]
    Empty,
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// One survey respondent.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonRecord {
    pub person_id: Id,
    pub cluster_id: Id,
    pub stratum_id: Id,
    pub weight: f64,
    pub birth_year: i32,
    /// Calendar month of birth (1..=12) when the extract carries it.
    pub birth_month: Option<u8>,
    pub years_completed: u32,
    /// Still in school at the survey date.
    pub censored: bool,
    pub area_id: Id,
    pub urban: bool,
}

impl PersonRecord {
    /// Event indicator for the final grade interval (1 when schooling is over).
    pub fn delta(&self) -> u32 {
        u32::from(!self.censored)
    }
}

/// Survey reference date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyDate {
    pub year: i32,
    /// 1..=12
    pub month: u8,
}

impl SurveyDate {
    /// Months since year 0, January = 0.
    pub fn month_index(&self) -> i64 {
        i64::from(self.year) * 12 + i64::from(self.month) - 1
    }
}

/// Input column names. Every field defaults to the canonical column name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub person_id: String,
    pub cluster_id: String,
    pub stratum_id: String,
    pub weight: String,
    pub birth_year: String,
    /// Optional column; silently absent from the file is fine.
    pub birth_month: String,
    pub years_completed: String,
    pub in_school: String,
    pub area_id: String,
    pub urban: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            person_id: "person_id".into(),
            cluster_id: "cluster_id".into(),
            stratum_id: "stratum_id".into(),
            weight: "weight".into(),
            birth_year: "birth_year".into(),
            birth_month: "birth_month".into(),
            years_completed: "years_completed".into(),
            in_school: "in_school".into(),
            area_id: "area_id".into(),
            urban: "urban".into(),
        }
    }
}

/// Ingestion configuration, usually read from a JSON file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaConfig {
    pub columns: ColumnMap,
    /// Overrides the maximum schooling duration K.
    pub k_max: Option<u32>,
    /// Birth-cohort bin width in years (1 or 5).
    pub cohort_width: u32,
    pub survey: Option<SurveyDate>,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        Self {
            columns: ColumnMap::default(),
            k_max: None,
            cohort_width: 1,
            survey: None,
        }
    }
}

impl SchemaConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| DataError::Config(e.to_string()))
    }

    pub fn options(&self) -> DatasetOptions {
        DatasetOptions {
            k_max: self.k_max,
            cohort_width: self.cohort_width,
            survey: self.survey,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetOptions {
    pub k_max: Option<u32>,
    pub cohort_width: u32,
    pub survey: Option<SurveyDate>,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            k_max: None,
            cohort_width: 1,
            survey: None,
        }
    }
}

/// Validated collection of respondents plus dataset-level settings.
#[derive(Debug, Clone)]
pub struct Dataset {
    records: Vec<PersonRecord>,
    k_max: u32,
    cohort_range: (i32, i32),
    cohort_width: u32,
    survey: Option<SurveyDate>,
    pub area_graph_ref: Option<String>,
}

impl Dataset {
    pub fn new(records: Vec<PersonRecord>, options: DatasetOptions) -> Result<Self, DataError> {
        if records.is_empty() {
            return Err(DataError::Empty);
        }
        if options.cohort_width != 1 && options.cohort_width != 5 {
            return Err(DataError::Config(format!(
                "cohort_width must be 1 or 5, got {}",
                options.cohort_width
            )));
        }
        if let Some(s) = options.survey {
            if !(1..=12).contains(&s.month) {
                return Err(DataError::Config(format!("survey month {} out of range", s.month)));
            }
        }

        let mut seen = HashSet::with_capacity(records.len());
        let mut clusters: HashMap<&str, (&str, &str, bool)> = HashMap::new();
        for r in &records {
            if !(r.weight > 0.0 && r.weight.is_finite()) {
                return Err(DataError::NonPositiveWeight {
                    line: 0,
                    weight: r.weight,
                });
            }
            if !seen.insert(r.person_id.as_ref()) {
                return Err(DataError::DuplicatePerson(r.person_id.to_string()));
            }
            let triple = (r.stratum_id.as_ref(), r.area_id.as_ref(), r.urban);
            match clusters.get(r.cluster_id.as_ref()) {
                Some(prev) if *prev != triple => {
                    return Err(DataError::InconsistentCluster {
                        cluster: r.cluster_id.to_string(),
                        first: format!("{}, {}, {}", prev.0, prev.1, prev.2),
                        second: format!("{}, {}, {}", triple.0, triple.1, triple.2),
                    });
                }
                Some(_) => {}
                None => {
                    clusters.insert(r.cluster_id.as_ref(), triple);
                }
            }
        }

        let max_years = records.iter().map(|r| r.years_completed).max().unwrap_or(0);
        let k_max = match options.k_max {
            Some(k) => {
                if let Some(r) = records.iter().find(|r| r.years_completed > k) {
                    return Err(DataError::ExceedsKMax {
                        person: r.person_id.to_string(),
                        years: r.years_completed,
                        k_max: k,
                    });
                }
                k
            }
            None => max_years,
        };

        let lo = records.iter().map(|r| r.birth_year).min().unwrap_or(0);
        let hi = records.iter().map(|r| r.birth_year).max().unwrap_or(0);

        Ok(Self {
            records,
            k_max,
            cohort_range: (lo, hi),
            cohort_width: options.cohort_width,
            survey: options.survey,
            area_graph_ref: None,
        })
    }

    pub fn records(&self) -> &[PersonRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<PersonRecord> {
        self.records
    }

    /// Maximum possible schooling duration K.
    pub fn k_max(&self) -> u32 {
        self.k_max
    }

    /// Inclusive birth-year range covered by the records.
    pub fn cohort_range(&self) -> (i32, i32) {
        self.cohort_range
    }

    pub fn cohort_width(&self) -> u32 {
        self.cohort_width
    }

    pub fn survey(&self) -> Option<SurveyDate> {
        self.survey
    }

    pub fn options(&self) -> DatasetOptions {
        DatasetOptions {
            k_max: Some(self.k_max),
            cohort_width: self.cohort_width,
            survey: self.survey,
        }
    }

    /// Rebuilds a dataset with the same settings around new records.
    pub fn with_records(&self, records: Vec<PersonRecord>) -> Result<Self, DataError> {
        let mut ds = Dataset::new(records, self.options())?;
        ds.area_graph_ref.clone_from(&self.area_graph_ref);
        Ok(ds)
    }

    /// Cohort label for a birth year: the first birth year of its bin.
    ///
    /// Five-year bins line up with the usual 15-19, 20-24, ... age groups
    /// when the survey date is known; otherwise they start at multiples of 5.
    pub fn cohort_of(&self, birth_year: i32) -> i32 {
        if self.cohort_width == 1 {
            return birth_year;
        }
        let w = self.cohort_width as i32;
        let anchor = self.survey.map_or(0, |s| s.year - 19);
        birth_year - (birth_year - anchor).rem_euclid(w)
    }

    /// Sorted distinct cohort labels present in the data.
    pub fn cohorts(&self) -> Vec<i32> {
        let mut c: Vec<i32> = self.records.iter().map(|r| self.cohort_of(r.birth_year)).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Completed age at the survey date. Missing birth months are read as June.
    pub fn age_at_survey(&self, r: &PersonRecord) -> Option<i32> {
        let s = self.survey?;
        let birth = i64::from(r.birth_year) * 12 + i64::from(r.birth_month.unwrap_or(6)) - 1;
        Some(((s.month_index() - birth).div_euclid(12)) as i32)
    }
}

/// One person-grade Bernoulli trial.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskRow {
    pub person_id: Id,
    pub cohort: i32,
    pub area_id: Id,
    pub urban: bool,
    pub grade: u32,
    pub event: bool,
    pub weight: f64,
    pub cluster_id: Id,
    pub stratum_id: Id,
}

/// Expands every respondent into grades `0 ..= t - (1 - delta)`.
pub fn expand_risk_rows(ds: &Dataset) -> Vec<RiskRow> {
    let total: usize = ds
        .records()
        .iter()
        .map(|r| (r.years_completed + r.delta()) as usize)
        .sum();
    let mut rows = Vec::with_capacity(total);
    for r in ds.records() {
        let cohort = ds.cohort_of(r.birth_year);
        let n = r.years_completed + r.delta();
        for grade in 0..n {
            rows.push(RiskRow {
                person_id: r.person_id.clone(),
                cohort,
                area_id: r.area_id.clone(),
                urban: r.urban,
                grade,
                event: !r.censored && grade == r.years_completed,
                weight: r.weight,
                cluster_id: r.cluster_id.clone(),
                stratum_id: r.stratum_id.clone(),
            });
        }
    }
    rows
}

/// Bernoulli log-likelihood of a set of rows under grade hazards `h[k]`.
pub fn risk_rows_log_likelihood(rows: &[RiskRow], hazards: &[f64]) -> f64 {
    rows.iter()
        .map(|r| {
            let h = hazards[r.grade as usize];
            if r.event {
                h.ln()
            } else {
                (1.0 - h).ln()
            }
        })
        .sum()
}

struct Columns {
    person_id: usize,
    cluster_id: usize,
    stratum_id: usize,
    weight: usize,
    birth_year: usize,
    birth_month: Option<usize>,
    years_completed: usize,
    in_school: usize,
    area_id: usize,
    urban: usize,
}

impl Columns {
    fn resolve(headers: &csv::StringRecord, map: &ColumnMap) -> Result<Self, DataError> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let need = |name: &str| find(name).ok_or_else(|| DataError::MissingColumn(name.to_string()));
        Ok(Self {
            person_id: need(&map.person_id)?,
            cluster_id: need(&map.cluster_id)?,
            stratum_id: need(&map.stratum_id)?,
            weight: need(&map.weight)?,
            birth_year: need(&map.birth_year)?,
            birth_month: find(&map.birth_month),
            years_completed: need(&map.years_completed)?,
            in_school: need(&map.in_school)?,
            area_id: need(&map.area_id)?,
            urban: need(&map.urban)?,
        })
    }
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim() {
        "1" | "true" | "TRUE" | "True" => Some(true),
        "0" | "false" | "FALSE" | "False" => Some(false),
        _ => None,
    }
}

/// Reads a respondent CSV using the configured column names.
pub fn load_dataset(path: &Path, config: &SchemaConfig) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset(file, config)
}

pub fn read_dataset<R: Read>(reader: R, config: &SchemaConfig) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(DataError::Empty);
    }
    let cols = Columns::resolve(&headers, &config.columns)?;
    let map = &config.columns;

    let mut records = Vec::new();
    let mut interner: HashMap<String, Id> = HashMap::new();
    let mut intern = |s: &str| -> Id {
        if let Some(id) = interner.get(s) {
            return id.clone();
        }
        let id: Id = Arc::from(s);
        interner.insert(s.to_string(), id.clone());
        id
    };

    for result in rdr.records() {
        let rec = result?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |idx: usize| rec.get(idx).unwrap_or("");
        let bad = |column: &str, value: &str| DataError::InvalidValue {
            line,
            column: column.to_string(),
            value: value.to_string(),
        };

        let weight_s = field(cols.weight);
        let weight: f64 = weight_s.parse().map_err(|_| bad(&map.weight, weight_s))?;
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(DataError::NonPositiveWeight { line, weight });
        }
        let by = field(cols.birth_year);
        let birth_year: i32 = by.parse().map_err(|_| bad(&map.birth_year, by))?;
        let birth_month = match cols.birth_month {
            Some(idx) if !field(idx).is_empty() => {
                let s = field(idx);
                let m: u8 = s.parse().map_err(|_| bad(&map.birth_month, s))?;
                if !(1..=12).contains(&m) {
                    return Err(bad(&map.birth_month, s));
                }
                Some(m)
            }
            _ => None,
        };
        let yc = field(cols.years_completed);
        let years_completed: u32 = yc.parse().map_err(|_| bad(&map.years_completed, yc))?;
        let is = field(cols.in_school);
        let censored = parse_flag(is).ok_or_else(|| bad(&map.in_school, is))?;
        let ur = field(cols.urban);
        let urban = parse_flag(ur).ok_or_else(|| bad(&map.urban, ur))?;

        records.push(PersonRecord {
            person_id: intern(field(cols.person_id)),
            cluster_id: intern(field(cols.cluster_id)),
            stratum_id: intern(field(cols.stratum_id)),
            weight,
            birth_year,
            birth_month,
            years_completed,
            censored,
            area_id: intern(field(cols.area_id)),
            urban,
        });
    }

    Dataset::new(records, config.options())
}

/// Writes a dataset with the canonical column names.
pub fn write_dataset<W: Write>(ds: &Dataset, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "person_id",
        "cluster_id",
        "stratum_id",
        "weight",
        "birth_year",
        "birth_month",
        "years_completed",
        "in_school",
        "area_id",
        "urban",
    ])?;
    for r in ds.records() {
        w.write_record([
            r.person_id.as_ref(),
            r.cluster_id.as_ref(),
            r.stratum_id.as_ref(),
            &r.weight.to_string(),
            &r.birth_year.to_string(),
            &r.birth_month.map(|m| m.to_string()).unwrap_or_default(),
            &r.years_completed.to_string(),
            if r.censored { "1" } else { "0" },
            r.area_id.as_ref(),
            if r.urban { "1" } else { "0" },
        ])?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: "<output>".into(),
        source,
    })?;
    Ok(())
}

pub fn write_risk_rows<W: Write>(rows: &[RiskRow], writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "person_id",
        "cohort",
        "area_id",
        "urban",
        "grade",
        "event",
        "weight",
        "cluster_id",
        "stratum_id",
    ])?;
    for r in rows {
        w.write_record([
            r.person_id.as_ref(),
            &r.cohort.to_string(),
            r.area_id.as_ref(),
            if r.urban { "1" } else { "0" },
            &r.grade.to_string(),
            if r.event { "1" } else { "0" },
            &r.weight.to_string(),
            r.cluster_id.as_ref(),
            r.stratum_id.as_ref(),
        ])?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: "<output>".into(),
        source,
    })?;
    Ok(())
}

/// Per-person `(max grade, any event)` summary of a row set.
pub fn summarize_by_person(rows: &[RiskRow]) -> BTreeMap<Id, (u32, bool)> {
    let mut out: BTreeMap<Id, (u32, bool)> = BTreeMap::new();
    for r in rows {
        let e = out.entry(r.person_id.clone()).or_insert((0, false));
        e.0 = e.0.max(r.grade);
        e.1 |= r.event;
    }
    out
}
