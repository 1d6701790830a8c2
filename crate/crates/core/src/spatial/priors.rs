//! Penalized-complexity style priors for the latent-field hyperparameters.

use serde::{Deserialize, Serialize};

use super::SpatialError;

/// Tail statements `P(param > upper) = prob` for each prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PcPriorConfig {
    pub sigma_upper: f64,
    pub sigma_prob: f64,
    pub lambda_upper: f64,
    pub lambda_prob: f64,
    pub rho_upper: f64,
    pub rho_prob: f64,
    /// Precision of the Gaussian prior on grade intercepts.
    pub beta_precision: f64,
}

impl Default for PcPriorConfig {
    fn default() -> Self {
        Self {
            sigma_upper: 1.0,
            sigma_prob: 0.01,
            lambda_upper: 0.5,
            lambda_prob: 2.0 / 3.0,
            rho_upper: 0.25,
            rho_prob: 0.01,
            beta_precision: 0.001,
        }
    }
}

/// Exponential prior on a standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdPrior {
    pub rate: f64,
}

impl SdPrior {
    pub fn new(upper: f64, prob: f64) -> Result<Self, SpatialError> {
        if !(upper > 0.0 && prob > 0.0 && prob < 1.0) {
            return Err(SpatialError::Prior(format!("sd prior P(sigma > {upper}) = {prob}")));
        }
        Ok(Self {
            rate: -prob.ln() / upper,
        })
    }

    pub fn log_density(&self, sigma: f64) -> f64 {
        self.rate.ln() - self.rate * sigma
    }
}

/// Prior on the BYM2 mixing proportion: exponential on the distance
/// `d(lambda) = sqrt(2 KLD)` from the unstructured base model.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingPrior {
    pub rate: f64,
    /// Eigenvalues of the scaled spatial covariance.
    gammas: Vec<f64>,
    flat: bool,
}

fn x_minus_ln1p(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        x * x / 2.0 - x * x * x / 3.0 + x * x * x * x / 4.0
    } else {
        x - x.ln_1p()
    }
}

impl MixingPrior {
    pub fn new(gammas: &[f64], upper: f64, prob: f64) -> Result<Self, SpatialError> {
        if !(upper > 0.0 && upper < 1.0 && prob > 0.0 && prob < 1.0) {
            return Err(SpatialError::Prior(format!("mixing prior P(lambda > {upper}) = {prob}")));
        }
        let mut p = Self {
            rate: 1.0,
            gammas: gammas.to_vec(),
            flat: gammas.iter().all(|&g| (g - 1.0).abs() < 1e-12),
        };
        if !p.flat {
            p.rate = -prob.ln() / p.distance(upper);
        }
        Ok(p)
    }

    pub fn kld(&self, lambda: f64) -> f64 {
        0.5 * self.gammas.iter().map(|&g| x_minus_ln1p(lambda * (g - 1.0))).sum::<f64>()
    }

    pub fn distance(&self, lambda: f64) -> f64 {
        (2.0 * self.kld(lambda)).sqrt()
    }

    fn distance_derivative(&self, lambda: f64) -> f64 {
        // KLD' = 1/2 sum (g-1)^2 lambda / (1 + lambda (g-1)); d' = KLD' / d
        let lam = lambda.max(1e-12);
        let num: f64 = self
            .gammas
            .iter()
            .map(|&g| {
                let a = g - 1.0;
                a * a / (1.0 + lam * a)
            })
            .sum::<f64>();
        // d ~ lam sqrt(sum a^2 / 2) near 0, so d' = 0.5 * lam * num / d is finite
        let d = self.distance(lam);
        if d == 0.0 {
            (0.5 * num).sqrt()
        } else {
            0.5 * lam * num / d
        }
    }

    /// Log density on the lambda scale; uniform when there is no structure.
    pub fn log_density(&self, lambda: f64) -> f64 {
        if self.flat {
            return 0.0;
        }
        let d = self.distance(lambda);
        if !d.is_finite() {
            return f64::NEG_INFINITY;
        }
        self.rate.ln() - self.rate * d + self.distance_derivative(lambda).ln()
    }
}

/// Exponential prior on the intra-cluster correlation truncated to `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoPrior {
    pub rate: f64,
    log_norm: f64,
}

impl RhoPrior {
    pub fn new(upper: f64, prob: f64) -> Result<Self, SpatialError> {
        if !(upper > 0.0 && upper < 1.0 && prob > 0.0 && prob < 1.0 - upper) {
            return Err(SpatialError::Prior(format!("rho prior P(rho > {upper}) = {prob}")));
        }
        // tail(rate) = (e^{-rate u} - e^{-rate}) / (1 - e^{-rate}) decreases in rate
        let tail = |r: f64| ((-r * upper).exp() - (-r).exp()) / (-(-r).exp_m1());
        let (mut lo, mut hi) = (1e-9, 1.0);
        while tail(hi) > prob {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if tail(mid) > prob {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let rate = 0.5 * (lo + hi);
        Ok(Self {
            rate,
            log_norm: (-(-rate).exp_m1()).ln(),
        })
    }

    pub fn log_density(&self, rho: f64) -> f64 {
        self.rate.ln() - self.rate * rho - self.log_norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sd_prior_tail() {
        let p = SdPrior::new(1.0, 0.01).unwrap();
        assert_relative_eq!((-p.rate).exp(), 0.01, epsilon = 1e-14);
    }

    #[test]
    fn rho_prior_tail_and_normalization() {
        let p = RhoPrior::new(0.25, 0.01).unwrap();
        // numerical integral of the density over [0.25, 1) and [0, 1)
        let n = 200_000;
        let (mut tail, mut total) = (0.0, 0.0);
        for i in 0..n {
            let r = (i as f64 + 0.5) / n as f64;
            let d = p.log_density(r).exp() / n as f64;
            total += d;
            if r > 0.25 {
                tail += d;
            }
        }
        assert_relative_eq!(total, 1.0, epsilon = 1e-6);
        assert_relative_eq!(tail, 0.01, epsilon = 1e-4);
        assert!(p.rate > 18.0 && p.rate < 19.0);
    }

    #[test]
    fn mixing_prior_tail_statement() {
        let gammas = [0.0, 0.4, 1.1, 2.5];
        let p = MixingPrior::new(&gammas, 0.5, 2.0 / 3.0).unwrap();
        assert_relative_eq!((-p.rate * p.distance(0.5)).exp(), 2.0 / 3.0, epsilon = 1e-12);
        // d(1) is infinite because of the constrained direction
        assert!(!p.distance(1.0).is_finite());
        // the distribution function is 1 - exp(-rate d(lambda))
        let upper = 0.99;
        let n = 400_000;
        let total: f64 = (0..n)
            .map(|i| {
                let l = upper * (i as f64 + 0.5) / n as f64;
                upper * p.log_density(l).exp() / n as f64
            })
            .sum();
        assert_relative_eq!(total, 1.0 - (-p.rate * p.distance(upper)).exp(), epsilon = 1e-4);
    }

    #[test]
    fn mixing_derivative_matches_finite_difference() {
        let p = MixingPrior::new(&[0.0, 0.3, 1.7, 2.2], 0.5, 2.0 / 3.0).unwrap();
        for &l in &[1e-3, 0.1, 0.5, 0.9] {
            let h = 1e-6;
            let fd = (p.distance(l + h) - p.distance(l - h)) / (2.0 * h);
            assert_relative_eq!(p.distance_derivative(l), fd, max_relative = 1e-5);
        }
    }
}
