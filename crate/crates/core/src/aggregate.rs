//! Combining urban and rural posterior draws into area estimates, urban-rural
//! exceedance probabilities and education-level distributions.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Id;
use crate::delta::survival_from_hazard_slice;
use crate::glm::LEVEL_BANDS;
use crate::spatial::{quantile, summarize_draws};
use crate::weighted::{Method, UysEstimate};

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("cannot pair {urban} urban draws with {rural} rural draws")]
    Pairing { urban: usize, rural: usize },
    #[error("urban fraction {0} is outside [0, 1]")]
    Fraction(f64),
    #[error("education levels need hazards for at least 14 grades, got {0}")]
    Band(usize),
    #[error("no draws")]
    Empty,
    #[error("area mask holds no population")]
    ZeroPopulation,
    #[error("grids differ in shape: {0:?} vs {1:?}")]
    GridShape((usize, usize), (usize, usize)),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no urban fraction for area `{area}`, group `{group}`")]
    MissingFraction { area: String, group: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn check_pair(urban: &[f64], rural: &[f64]) -> Result<(), AggregateError> {
    if urban.len() != rural.len() {
        return Err(AggregateError::Pairing {
            urban: urban.len(),
            rural: rural.len(),
        });
    }
    if urban.is_empty() {
        return Err(AggregateError::Empty);
    }
    Ok(())
}

/// Draw-by-draw mixture `r * urban + (1 - r) * rural`.
///
/// Urban and rural fits are independent, so pairing by draw index leaves the
/// joint distribution of the pair correct.
pub fn aggregate_uys(urban: &[f64], rural: &[f64], r: f64) -> Result<(UysEstimate, Vec<f64>), AggregateError> {
    if !(0.0..=1.0).contains(&r) {
        return Err(AggregateError::Fraction(r));
    }
    check_pair(urban, rural)?;
    let draws: Vec<f64> = if r == 1.0 {
        urban.to_vec()
    } else if r == 0.0 {
        rural.to_vec()
    } else {
        urban.iter().zip(rural).map(|(u, v)| r * u + (1.0 - r) * v).collect()
    };
    Ok((summarize_draws(&draws, 0, Method::Spatial), draws))
}

/// Share of paired draws where the urban value exceeds the rural one by
/// more than `threshold`.
pub fn exceedance_probability(urban: &[f64], rural: &[f64], threshold: f64) -> Result<f64, AggregateError> {
    check_pair(urban, rural)?;
    let hits = urban.iter().zip(rural).filter(|(u, v)| *u - *v > threshold).count();
    Ok(hits as f64 / urban.len() as f64)
}

/// Probability of each attainment band, `P(T = t) = S(t) - S(t + 1)` summed
/// over the band, for one hazard vector covering grades `0..K`.
pub fn level_probabilities(hazards: &[f64]) -> Result<[f64; 6], AggregateError> {
    let k = hazards.len();
    if k < 14 {
        return Err(AggregateError::Band(k));
    }
    let s = survival_from_hazard_slice(hazards);
    let mass = |t: usize| if t < k { s[t] - s[t + 1] } else { s[k] };
    let mut out = [0.0; 6];
    for (slot, (_, lo, hi)) in out.iter_mut().zip(LEVEL_BANDS) {
        let hi = hi.map_or(k, |h| h as usize);
        *slot = (lo as usize..=hi).map(mass).sum();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelProbability {
    pub level: String,
    pub mean: f64,
    pub ci90: (f64, f64),
}

fn summarize_levels(per_draw: &[[f64; 6]]) -> Vec<LevelProbability> {
    LEVEL_BANDS
        .iter()
        .enumerate()
        .map(|(j, (name, _, _))| {
            let mut v: Vec<f64> = per_draw.iter().map(|p| p[j]).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.sort_by(f64::total_cmp);
            LevelProbability {
                level: name.to_string(),
                mean,
                ci90: (quantile(&v, 0.05), quantile(&v, 0.95)),
            }
        })
        .collect()
}

/// Posterior mean and 90% interval of every band across hazard draws.
pub fn education_level_distribution(hazard_draws: &[Vec<f64>]) -> Result<Vec<LevelProbability>, AggregateError> {
    mixed_level_distribution(hazard_draws, None, 1.0)
}

/// Band probabilities of an urban-rural domain. Band probabilities are
/// linear in the attainment distribution, so each draw mixes the urban and
/// rural band probabilities with weight `r`.
pub fn mixed_level_distribution(
    urban: &[Vec<f64>],
    rural: Option<&[Vec<f64>]>,
    r: f64,
) -> Result<Vec<LevelProbability>, AggregateError> {
    if !(0.0..=1.0).contains(&r) {
        return Err(AggregateError::Fraction(r));
    }
    if urban.is_empty() {
        return Err(AggregateError::Empty);
    }
    let bands = |draws: &[Vec<f64>]| draws.iter().map(|h| level_probabilities(h)).collect::<Result<Vec<_>, _>>();
    let mut per_draw = bands(urban)?;
    match rural {
        Some(rd) if r < 1.0 => {
            if rd.len() != urban.len() {
                return Err(AggregateError::Pairing {
                    urban: urban.len(),
                    rural: rd.len(),
                });
            }
            for (u, v) in per_draw.iter_mut().zip(bands(rd)?) {
                for (a, b) in u.iter_mut().zip(v) {
                    *a = r * *a + (1.0 - r) * b;
                }
            }
        }
        _ if r == 1.0 => {}
        _ => {
            return Err(AggregateError::Pairing {
                urban: urban.len(),
                rural: 0,
            })
        }
    }
    Ok(summarize_levels(&per_draw))
}

/// Plain-text raster: rows of whitespace-separated reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn read<R: Read>(reader: R) -> Result<Self, AggregateError> {
        let mut values = Vec::new();
        let mut rows = 0;
        let mut cols = None;
        for (n, line) in std::io::BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>().map_err(|_| AggregateError::Parse {
                        line: n + 1,
                        message: format!("`{t}` is not a number"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            match cols {
                None => cols = Some(row.len()),
                Some(c) if c != row.len() => {
                    return Err(AggregateError::Parse {
                        line: n + 1,
                        message: format!("expected {c} values, found {}", row.len()),
                    })
                }
                _ => {}
            }
            values.extend(row);
            rows += 1;
        }
        Ok(Self {
            rows,
            cols: cols.unwrap_or(0),
            values,
        })
    }

    fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// Population-weighted urban share `sum v_g H_g / sum H_g` over the pixels
/// where `mask` is nonzero (all pixels when no mask is given).
pub fn urban_fraction_from_rasters(labels: &Grid, density: &Grid, mask: Option<&Grid>) -> Result<f64, AggregateError> {
    if labels.shape() != density.shape() {
        return Err(AggregateError::GridShape(labels.shape(), density.shape()));
    }
    if let Some(m) = mask {
        if m.shape() != density.shape() {
            return Err(AggregateError::GridShape(m.shape(), density.shape()));
        }
    }
    let inside = |g: usize| mask.is_none_or(|m| m.values[g] != 0.0);
    let (mut num, mut den) = (0.0, 0.0);
    for g in (0..density.values.len()).filter(|&g| inside(g)) {
        num += labels.values[g] * density.values[g];
        den += density.values[g];
    }
    if !(den > 0.0) {
        return Err(AggregateError::ZeroPopulation);
    }
    Ok(num / den)
}

/// Urban population fractions keyed by area and a user-chosen group label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UrbanFractionTable {
    entries: BTreeMap<(Id, String), f64>,
}

impl UrbanFractionTable {
    pub fn insert(&mut self, area: Id, group: impl Into<String>, fraction: f64) -> Result<(), AggregateError> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(AggregateError::Fraction(fraction));
        }
        self.entries.insert((area, group.into()), fraction);
        Ok(())
    }

    pub fn get(&self, area: &str, group: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|((a, g), _)| a.as_ref() == area && g == group)
            .map(|(_, &r)| r)
    }

    pub fn require(&self, area: &str, group: &str) -> Result<f64, AggregateError> {
        self.get(area, group).ok_or_else(|| AggregateError::MissingFraction {
            area: area.to_string(),
            group: group.to_string(),
        })
    }

    /// `(area, group, fraction)` in area, then group order.
    pub fn iter(&self) -> impl Iterator<Item = (&Id, &str, f64)> {
        self.entries.iter().map(|((a, g), &r)| (a, g.as_str(), r))
    }

    /// Entries with no rural population.
    pub fn fully_urban(&self) -> impl Iterator<Item = (&Id, &str)> {
        self.entries
            .iter()
            .filter(|(_, &r)| r == 1.0)
            .map(|((a, g), _)| (a, g.as_str()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Reads the `area_id,group,fraction` CSV.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, AggregateError> {
        #[derive(Deserialize)]
        struct Row {
            area_id: String,
            group: String,
            fraction: f64,
        }
        let mut table = Self::default();
        for row in csv::Reader::from_reader(reader).deserialize() {
            let row: Row = row?;
            table.insert(Id::from(row.area_id), row.group, row.fraction)?;
        }
        Ok(table)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), AggregateError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["area_id", "group", "fraction"])?;
        for ((a, g), r) in &self.entries {
            w.write_record([a.as_ref(), g.as_str(), &r.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Overall, urban and rural UYS for one area and group, with urban-rural
/// exceedance probabilities and, when hazards reach grade 14, attainment
/// bands.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSummary {
    pub area: Id,
    pub group: String,
    pub urban_fraction: f64,
    pub overall: UysEstimate,
    pub urban: UysEstimate,
    /// Absent for fully urban areas.
    pub rural: Option<UysEstimate>,
    pub exceedance: Vec<(f64, f64)>,
    pub levels: Option<Vec<LevelProbability>>,
}

/// Builds a summary from paired UYS draws. `rural` is ignored when `r = 1`.
pub fn summarize_domain(
    area: Id,
    group: impl Into<String>,
    r: f64,
    urban: &[f64],
    rural: Option<&[f64]>,
    thresholds: &[f64],
    levels: Option<Vec<LevelProbability>>,
) -> Result<DomainSummary, AggregateError> {
    let urban_est = summarize_draws(urban, 0, Method::Spatial);
    let (overall, rural_est, exceedance) = match rural {
        Some(rd) if r < 1.0 => {
            let (overall, _) = aggregate_uys(urban, rd, r)?;
            let ex = thresholds
                .iter()
                .map(|&t| exceedance_probability(urban, rd, t).map(|p| (t, p)))
                .collect::<Result<Vec<_>, _>>()?;
            (overall, Some(summarize_draws(rd, 0, Method::Spatial)), ex)
        }
        _ if r == 1.0 => (urban_est.clone(), None, Vec::new()),
        _ => {
            return Err(AggregateError::Pairing {
                urban: urban.len(),
                rural: 0,
            })
        }
    };
    Ok(DomainSummary {
        area,
        group: group.into(),
        urban_fraction: r,
        overall,
        urban: urban_est,
        rural: rural_est,
        exceedance,
        levels,
    })
}

/// One flattened row per summary. Threshold and level columns follow the
/// first summary; missing values are left blank.
pub fn write_domain_summaries<W: Write>(summaries: &[DomainSummary], writer: W) -> Result<(), AggregateError> {
    let mut w = csv::Writer::from_writer(writer);
    let thresholds: Vec<f64> = summaries
        .iter()
        .find(|s| !s.exceedance.is_empty())
        .map(|s| s.exceedance.iter().map(|(t, _)| *t).collect())
        .unwrap_or_default();
    let with_levels = summaries.iter().any(|s| s.levels.is_some());
    let mut header: Vec<String> = ["area_id", "group", "urban_fraction"].map(String::from).to_vec();
    for part in ["overall", "urban", "rural"] {
        for stat in ["mean", "sd", "ci_lo", "ci_hi"] {
            header.push(format!("uys_{part}_{stat}"));
        }
    }
    header.extend(thresholds.iter().map(|t| format!("p_diff_gt_{t}")));
    if with_levels {
        for (name, _, _) in LEVEL_BANDS {
            for stat in ["mean", "ci_lo", "ci_hi"] {
                header.push(format!("level_{name}_{stat}"));
            }
        }
    }
    w.write_record(&header)?;
    let est = |e: Option<&UysEstimate>| -> [String; 4] {
        match e {
            Some(e) => [e.mean, e.se, e.ci90.0, e.ci90.1].map(|v| v.to_string()),
            None => Default::default(),
        }
    };
    for s in summaries {
        let mut rec = vec![s.area.to_string(), s.group.clone(), s.urban_fraction.to_string()];
        rec.extend(est(Some(&s.overall)));
        rec.extend(est(Some(&s.urban)));
        rec.extend(est(s.rural.as_ref()));
        for t in &thresholds {
            rec.push(
                s.exceedance
                    .iter()
                    .find(|(x, _)| x == t)
                    .map_or(String::new(), |(_, p)| p.to_string()),
            );
        }
        if with_levels {
            match &s.levels {
                Some(levels) => {
                    for l in levels {
                        rec.extend([l.mean, l.ci90.0, l.ci90.1].map(|v| v.to_string()));
                    }
                }
                None => rec.extend(std::iter::repeat_n(String::new(), 3 * LEVEL_BANDS.len())),
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mixture_examples() {
        let u = vec![10.0; 5];
        let r = vec![5.0; 5];
        assert_relative_eq!(aggregate_uys(&u, &r, 0.4).unwrap().0.mean, 7.0, epsilon = 1e-12);
        assert_eq!(aggregate_uys(&u, &r, 1.0).unwrap().1, u);
        assert_eq!(aggregate_uys(&u, &r, 0.0).unwrap().1, r);
        assert!(matches!(aggregate_uys(&u, &r[..3], 0.5), Err(AggregateError::Pairing { .. })));
        assert!(matches!(aggregate_uys(&u, &r, 1.5), Err(AggregateError::Fraction(_))));
    }

    #[test]
    fn exceedance_examples() {
        let r = [0.0, 0.0, 0.0, 0.0];
        assert_eq!(exceedance_probability(&[3.0; 4], &r, 2.0).unwrap(), 1.0);
        assert_eq!(exceedance_probability(&r, &r, 2.0).unwrap(), 0.0);
        assert_eq!(exceedance_probability(&[1.5, 2.5, 3.0, 1.0], &r, 2.0).unwrap(), 0.5);
    }

    #[test]
    fn level_examples() {
        let mut h = vec![0.3; 15];
        h[0] = 1.0;
        assert_eq!(level_probabilities(&h).unwrap(), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let mut h = vec![0.0; 15];
        h[7] = 1.0;
        assert_eq!(level_probabilities(&h).unwrap(), [0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(level_probabilities(&[0.1; 13]), Err(AggregateError::Band(13))));
        // an even mixture of "none" and "completed primary"
        let mut none = vec![0.3; 15];
        none[0] = 1.0;
        let mix = mixed_level_distribution(&[none], Some(&[h.clone()]), 0.5).unwrap();
        assert_relative_eq!(mix[0].mean, 0.5);
        assert_relative_eq!(mix[2].mean, 0.5);
        let h = vec![0.0; 14];
        assert_eq!(level_probabilities(&h).unwrap()[5], 1.0);
    }

    #[test]
    fn raster_examples() {
        let g = |s: &str| Grid::read(s.as_bytes()).unwrap();
        assert_eq!(urban_fraction_from_rasters(&g("1 0"), &g("30 70"), None).unwrap(), 0.3);
        assert_eq!(urban_fraction_from_rasters(&g("1 1\n1 1"), &g("1 2\n3 4"), None).unwrap(), 1.0);
        assert!(matches!(
            urban_fraction_from_rasters(&g("1 0"), &g("0 0"), None),
            Err(AggregateError::ZeroPopulation)
        ));
        let masked = urban_fraction_from_rasters(&g("1 0 0"), &g("30 70 50"), Some(&g("1 0 1"))).unwrap();
        assert_relative_eq!(masked, 30.0 / 80.0);
        assert!(matches!(
            urban_fraction_from_rasters(&g("1 0"), &g("1\n2"), None),
            Err(AggregateError::GridShape(..))
        ));
    }

    #[test]
    fn fraction_table_roundtrip() {
        let csv = "area_id,group,fraction\na,15-19,0.25\nb,15-19,1\n";
        let t = UrbanFractionTable::read_csv(csv.as_bytes()).unwrap();
        assert_eq!(t.get("a", "15-19"), Some(0.25));
        assert_eq!(t.fully_urban().count(), 1);
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), csv);
        assert!(UrbanFractionTable::read_csv("area_id,group,fraction\na,x,1.2\n".as_bytes()).is_err());
    }

    #[test]
    fn fully_urban_summary_skips_rural() {
        let s = summarize_domain(Id::from("dar"), "g", 1.0, &[8.0, 9.0], None, &[2.0], None).unwrap();
        assert!(s.rural.is_none());
        assert_eq!(s.overall, s.urban);
        let mut out = Vec::new();
        write_domain_summaries(&[s], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("area_id,group,urban_fraction,uys_overall_mean"));
    }
}
