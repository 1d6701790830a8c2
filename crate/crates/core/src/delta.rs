//! Delta-method variances for survival probabilities and UYS.
//!
//! Two parameterizations are supported: logit hazards `beta` (as produced
//! by the survey GLM) and raw hazards `h` (as produced by the weighted
//! hazard estimator).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeltaError {
    #[error("covariance is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("covariance is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("covariance is {rows}x{cols} but there are {params} parameters")]
    Dimension { rows: usize, cols: usize, params: usize },
    #[error("grade {t} outside 1..={k_max}")]
    GradeOutOfRange { t: usize, k_max: usize },
}

/// Tolerance for symmetry and PSD checks on covariance inputs.
pub const PSD_TOL: f64 = 1e-8;

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `S(0..=K)` from hazards `h_0..h_{K-1}`; entries past the hazards are not
/// produced, so the result has `h.len() + 1` entries.
pub fn survival_from_hazard_slice(h: &[f64]) -> Vec<f64> {
    let mut s = Vec::with_capacity(h.len() + 1);
    let mut acc = 1.0;
    s.push(acc);
    for &hk in h {
        acc *= 1.0 - hk;
        s.push(acc);
    }
    s
}

/// `S(0..=K)` for logit hazards `beta_0..beta_{K-1}`.
pub fn survival_from_logits(beta: &[f64]) -> Vec<f64> {
    let h: Vec<f64> = beta.iter().map(|&b| expit(b)).collect();
    survival_from_hazard_slice(&h)
}

/// `sum_{t=1}^{K} S(t)`.
pub fn uys_from_hazard_slice(h: &[f64]) -> f64 {
    survival_from_hazard_slice(h).iter().skip(1).sum()
}

/// Gradient of `S(t)` with respect to the logits.
pub fn survival_gradient(beta: &[f64], t: usize) -> Vec<f64> {
    let s = survival_from_logits(beta);
    beta.iter()
        .enumerate()
        .map(|(j, &b)| if j < t { -s[t] * expit(b) } else { 0.0 })
        .collect()
}

/// Gradient of UYS with respect to the logits.
pub fn uys_gradient(beta: &[f64]) -> Vec<f64> {
    let s = survival_from_logits(beta);
    let k = beta.len();
    // tail[j] = sum_{t > j} S(t)
    let mut tail = vec![0.0; k + 1];
    for t in (0..k).rev() {
        tail[t] = tail[t + 1] + s[t + 1];
    }
    beta.iter()
        .enumerate()
        .map(|(j, &b)| -expit(b) * tail[j])
        .collect()
}

/// Gradient of `S(t)` with respect to the hazards themselves:
/// `-prod_{k<t, k!=j} (1 - h_k)` for `j < t`. Stays finite when some `h = 1`.
pub fn survival_gradient_hazards(h: &[f64], t: usize) -> Vec<f64> {
    let t = t.min(h.len());
    // prefix[j] = prod_{k<j}(1-h_k), suffix[j] = prod_{j<=k<t}(1-h_k)
    let mut prefix = vec![1.0; t + 1];
    for k in 0..t {
        prefix[k + 1] = prefix[k] * (1.0 - h[k]);
    }
    let mut suffix = vec![1.0; t + 1];
    for k in (0..t).rev() {
        suffix[k] = suffix[k + 1] * (1.0 - h[k]);
    }
    (0..h.len())
        .map(|j| if j < t { -prefix[j] * suffix[j + 1] } else { 0.0 })
        .collect()
}

/// Gradient of UYS with respect to the hazards, counting `S(t)` only for
/// `t <= horizon`.
pub fn uys_gradient_hazards(h: &[f64], horizon: usize) -> Vec<f64> {
    let mut g = vec![0.0; h.len()];
    for t in 1..=horizon.min(h.len()) {
        for (gj, dj) in g.iter_mut().zip(survival_gradient_hazards(h, t)) {
            *gj += dj;
        }
    }
    g
}

/// Checks that `sigma` is square of size `p`, symmetric and PSD within
/// [`PSD_TOL`] (relative to its largest eigenvalue when that exceeds 1).
pub fn check_covariance(sigma: &DMatrix<f64>, p: usize) -> Result<(), DeltaError> {
    if sigma.nrows() != p || sigma.ncols() != p {
        return Err(DeltaError::Dimension {
            rows: sigma.nrows(),
            cols: sigma.ncols(),
            params: p,
        });
    }
    if p == 0 {
        return Ok(());
    }
    let scale = sigma.amax().max(1.0);
    let asym = (sigma - sigma.transpose()).amax();
    if asym > PSD_TOL * scale {
        return Err(DeltaError::NotSymmetric(asym));
    }
    let sym = (sigma + sigma.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.min();
    if min < -PSD_TOL * scale {
        return Err(DeltaError::NotPsd { min_eigenvalue: min });
    }
    Ok(())
}

/// `g' Sigma g`, clamped at zero against rounding.
pub fn quadratic_form(g: &[f64], sigma: &DMatrix<f64>) -> f64 {
    let g = DVector::from_column_slice(g);
    (g.transpose() * sigma * &g)[(0, 0)].max(0.0)
}

/// Delta-method variance of `S(t)` for logit hazards `beta` with covariance `sigma`.
pub fn delta_var_survival(beta: &[f64], sigma: &DMatrix<f64>, t: usize) -> Result<f64, DeltaError> {
    if t == 0 || t > beta.len() {
        return Err(DeltaError::GradeOutOfRange {
            t,
            k_max: beta.len(),
        });
    }
    check_covariance(sigma, beta.len())?;
    Ok(quadratic_form(&survival_gradient(beta, t), sigma))
}

/// Delta-method variance of UYS for logit hazards `beta` with covariance `sigma`.
pub fn delta_var_uys(beta: &[f64], sigma: &DMatrix<f64>) -> Result<f64, DeltaError> {
    check_covariance(sigma, beta.len())?;
    Ok(quadratic_form(&uys_gradient(beta), sigma))
}
