//! Beta-binomial likelihood in (mean hazard, intra-cluster correlation) form.
//!
//! With `s = (1 - rho) / rho`, `alpha = h s` and `beta = (1 - h) s`, the log
//! pmf is evaluated through the finite rising-factorial sums
//!
//! ```text
//! sum_{i<y} ln(alpha + i) + sum_{i<n-y} ln(beta + i) - sum_{i<n} ln(s + i) + ln C(n, y)
//! ```
//!
//! which stay accurate as `rho -> 0`, where log-gamma differences cancel.

use super::SpatialError;

/// `ln C(n, y)` by summation; exact enough for the small `n` of grade cells.
pub fn ln_choose(n: u32, y: u32) -> f64 {
    let y = y.min(n - y);
    (0..y).map(|i| (f64::from(n - i) / f64::from(i + 1)).ln()).sum()
}

fn binomial_logpmf(y: u32, n: u32, h: f64) -> f64 {
    ln_choose(n, y) + f64::from(y) * h.ln() + f64::from(n - y) * (-h).ln_1p()
}

/// Log pmf of `y` exits among `n` at risk with mean hazard `h` and
/// intra-cluster correlation `rho`.
pub fn beta_binomial_logpmf(y: u32, n: u32, h: f64, rho: f64) -> Result<f64, SpatialError> {
    if y > n {
        return Err(SpatialError::Domain(format!("y = {y} exceeds n = {n}")));
    }
    if !(0.0..=1.0).contains(&h) || h.is_nan() {
        return Err(SpatialError::Domain(format!("hazard {h} outside [0, 1]")));
    }
    if !(0.0..1.0).contains(&rho) || rho.is_nan() {
        return Err(SpatialError::Domain(format!("rho {rho} outside [0, 1)")));
    }
    if h == 0.0 {
        return Ok(if y == 0 { 0.0 } else { f64::NEG_INFINITY });
    }
    if h == 1.0 {
        return Ok(if y == n { 0.0 } else { f64::NEG_INFINITY });
    }
    if rho == 0.0 {
        return Ok(binomial_logpmf(y, n, h));
    }
    let s = (1.0 - rho) / rho;
    let a = h * s;
    let b = (1.0 - h) * s;
    let mut ll = ln_choose(n, y);
    for i in 0..y {
        ll += (a + f64::from(i)).ln();
    }
    for i in 0..(n - y) {
        ll += (b + f64::from(i)).ln();
    }
    for i in 0..n {
        ll -= (s + f64::from(i)).ln();
    }
    Ok(ll)
}

/// Cumulative sums of `ln(x + i)` and `1 / (x + i)` for `i < m`, reused
/// across all cells sharing a mean hazard.
#[derive(Debug, Clone, Default)]
pub(crate) struct RisingSums {
    pub log: Vec<f64>,
    pub inv: Vec<f64>,
}

impl RisingSums {
    pub fn fill(&mut self, x: f64, m: usize) {
        self.log.clear();
        self.inv.clear();
        self.log.push(0.0);
        self.inv.push(0.0);
        let (mut l, mut r) = (0.0, 0.0);
        for i in 0..m {
            let v = x + i as f64;
            l += v.ln();
            r += 1.0 / v;
            self.log.push(l);
            self.inv.push(r);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_mixing_gives_flat_pmf() {
        for y in 0..=2 {
            let p = beta_binomial_logpmf(y, 2, 0.5, 1.0 / 3.0).unwrap().exp();
            assert_relative_eq!(p, 1.0 / 3.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn tiny_rho_is_binomial() {
        for &(y, n, h) in &[(0, 5, 0.3), (3, 7, 0.1), (10, 10, 0.9), (4, 12, 0.55)] {
            let bb = beta_binomial_logpmf(y, n, h, 1e-12).unwrap();
            assert!((bb - binomial_logpmf(y, n, h)).abs() < 1e-6);
        }
    }

    #[test]
    fn single_trial_is_bernoulli() {
        for &rho in &[1e-6, 0.2, 0.9] {
            assert_relative_eq!(beta_binomial_logpmf(1, 1, 0.3, rho).unwrap().exp(), 0.3, epsilon = 1e-14);
            assert_relative_eq!(beta_binomial_logpmf(0, 1, 0.3, rho).unwrap().exp(), 0.7, epsilon = 1e-14);
        }
    }

    #[test]
    fn boundary_hazards_and_domain_errors() {
        assert_eq!(beta_binomial_logpmf(0, 3, 0.0, 0.1).unwrap(), 0.0);
        assert_eq!(beta_binomial_logpmf(1, 3, 0.0, 0.1).unwrap(), f64::NEG_INFINITY);
        assert_eq!(beta_binomial_logpmf(2, 3, 1.0, 0.1).unwrap(), f64::NEG_INFINITY);
        assert!(beta_binomial_logpmf(1, 3, 0.5, 1.0).is_err());
        assert!(beta_binomial_logpmf(4, 3, 0.5, 0.1).is_err());
    }

    #[test]
    fn ln_choose_small_values() {
        assert_relative_eq!(ln_choose(5, 2), 10f64.ln(), epsilon = 1e-14);
        assert_eq!(ln_choose(4, 0), 0.0);
        assert_relative_eq!(ln_choose(15, 7), 6435f64.ln(), epsilon = 1e-13);
    }
}
