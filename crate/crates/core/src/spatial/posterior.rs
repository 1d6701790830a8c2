//! Posterior hazards, survival and UYS per domain.

use super::{PosteriorDraws, SpatialError};
use crate::delta::{expit, uys_from_hazard_slice};
use crate::weighted::{Method, UysEstimate};

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Posterior mean, sd and equal-tailed 90% interval of a draw vector.
pub fn summarize_draws(draws: &[f64], n_eff: usize, method: Method) -> UysEstimate {
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let sd = if draws.len() > 1 {
        (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = quantile(&sorted, 0.05).min(mean);
    let hi = quantile(&sorted, 0.95).max(mean);
    UysEstimate {
        mean,
        se: sd,
        ci90: (lo, hi),
        n_eff,
        method,
        truncated: false,
    }
}

fn check_stratum(pd: &PosteriorDraws, urban: Option<bool>) -> Result<(), SpatialError> {
    let label = |u: Option<bool>| match u {
        Some(true) => "urban".to_string(),
        Some(false) => "rural".to_string(),
        None => "pooled".to_string(),
    };
    match (pd.urban, urban) {
        (Some(a), Some(b)) if a != b => Err(SpatialError::StratumMismatch {
            fit: label(pd.urban),
            requested: label(urban),
        }),
        _ => Ok(()),
    }
}

/// Hazards for grades `0..n_grades` in each draw for one (cohort, area).
pub fn posterior_hazards(
    pd: &PosteriorDraws,
    cohort: i32,
    area: &str,
    urban: Option<bool>,
) -> Result<Vec<Vec<f64>>, SpatialError> {
    check_stratum(pd, urban)?;
    let b = pd.cohort_index(cohort).ok_or(SpatialError::UnknownCohort(cohort))?;
    let i = pd
        .area_index(area)
        .ok_or_else(|| SpatialError::UnknownArea(area.to_string()))?;
    let (o_beta, o_phi, o_nu, o_u, _, o_zeta) = pd.offsets();
    let a = pd.areas.len();
    Ok(pd
        .values
        .iter()
        .map(|r| {
            let shift = r[o_phi + b] + r[o_nu + b] + r[o_u + i] + r[o_zeta + i + a * b];
            (0..pd.n_grades).map(|k| expit(r[o_beta + k] + shift)).collect()
        })
        .collect())
}

/// Posterior UYS for a domain, with its per-draw values.
pub fn posterior_uys(
    pd: &PosteriorDraws,
    cohort: i32,
    area: &str,
    urban: Option<bool>,
) -> Result<(UysEstimate, Vec<f64>), SpatialError> {
    let draws: Vec<f64> = posterior_hazards(pd, cohort, area, urban)?
        .iter()
        .map(|h| uys_from_hazard_slice(h))
        .collect();
    Ok((summarize_draws(&draws, 0, Method::Spatial), draws))
}

/// Population-weighted combination of area UYS draws for one cohort.
pub fn posterior_uys_weighted(
    pd: &PosteriorDraws,
    cohort: i32,
    area_weights: &[(&str, f64)],
    urban: Option<bool>,
) -> Result<(UysEstimate, Vec<f64>), SpatialError> {
    let total: f64 = area_weights.iter().map(|(_, w)| w).sum();
    if !(total > 0.0) {
        return Err(SpatialError::Domain("area weights must have a positive sum".into()));
    }
    let mut acc = vec![0.0; pd.n_draws()];
    for (area, w) in area_weights {
        let (_, d) = posterior_uys(pd, cohort, area, urban)?;
        for (a, v) in acc.iter_mut().zip(d) {
            *a += w / total * v;
        }
    }
    Ok((summarize_draws(&acc, 0, Method::Spatial), acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delta::logit;
    use crate::spatial::Diagnostics;
    use approx::assert_relative_eq;

    fn fixed_draws(n: usize) -> PosteriorDraws {
        // one cohort, one area, two grades: hazards (0.2, 0.5) in every draw
        let columns = ["beta[0]", "beta[1]", "phi[2000]", "nu[2000]", "u[a]", "s[a]", "zeta[a,2000]"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        PosteriorDraws {
            columns,
            values: vec![vec![logit(0.2), logit(0.5), 0.0, 0.0, 0.0, 0.0, 0.0]; n],
            chain: vec![0; n],
            seed: 0,
            n_chains: 1,
            cohorts: vec![2000],
            areas: vec!["a".into()],
            n_grades: 2,
            urban: Some(true),
            diagnostics: Diagnostics::default(),
        }
    }

    #[test]
    fn identical_draws_give_degenerate_summary() {
        let pd = fixed_draws(10);
        let (e, d) = posterior_uys(&pd, 2000, "a", Some(true)).unwrap();
        assert_relative_eq!(d[0], 1.2, epsilon = 1e-14);
        assert_relative_eq!(e.mean, 1.2, epsilon = 1e-14);
        assert!(e.se.abs() < 1e-14);
        assert_relative_eq!(e.ci90.0, e.ci90.1, epsilon = 1e-14);
    }

    #[test]
    fn unknown_domain_and_stratum_errors() {
        let pd = fixed_draws(2);
        assert!(matches!(
            posterior_uys(&pd, 1999, "a", None),
            Err(SpatialError::UnknownCohort(1999))
        ));
        assert!(matches!(
            posterior_uys(&pd, 2000, "zz", None),
            Err(SpatialError::UnknownArea(_))
        ));
        assert!(matches!(
            posterior_uys(&pd, 2000, "a", Some(false)),
            Err(SpatialError::StratumMismatch { .. })
        ));
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_relative_eq!(quantile(&v, 0.05), 1.2);
        assert_relative_eq!(quantile(&v, 0.95), 4.8);
    }
}
