//! Log posterior of the beta-binomial spatio-temporal hazard model and its
//! gradient, in whitened non-centred coordinates.
//!
//! `logit h_{b,i,k} = beta_k + phi_b + nu_b + u_i + zeta_{i,b}` with
//!
//! * `phi = sigma_phi * T z_phi` (scaled RW1 over cohorts),
//! * `nu = sigma_nu * z_nu` (IID cohorts),
//! * `u = sigma_u * (sqrt(1 - lambda) z_e + sqrt(lambda) W z_s)` (BYM2),
//! * `zeta = sigma_zeta * W_icar Z T'` (type-IV interaction).
//!
//! The bases are whitening maps of the scaled structure matrices, so every
//! sum-to-zero constraint holds by construction.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::betabinom::{ln_choose, RisingSums};
use super::cells::GradeCountCell;
use super::priors::{MixingPrior, PcPriorConfig, RhoPrior, SdPrior};
use super::structure::LatentStructure;
use super::SpatialError;
use crate::delta::expit;

pub const HYPER_NAMES: [&str; 6] = ["sigma_phi", "sigma_nu", "sigma_u", "lambda", "sigma_zeta", "rho"];

/// Positions of each block in the unconstrained parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub n_grades: usize,
    pub n_cohorts: usize,
    pub n_areas: usize,
    pub rw1_rank: usize,
    pub spatial_cols: usize,
    pub icar_rank: usize,
    pub beta: usize,
    pub z_phi: usize,
    pub z_nu: usize,
    pub z_e: usize,
    pub z_s: usize,
    pub z_zeta: usize,
    /// log sigma_phi, log sigma_nu, log sigma_u, logit lambda, log sigma_zeta, logit rho
    pub hyper: usize,
    pub dim: usize,
}

impl ParamLayout {
    pub fn new(s: &LatentStructure) -> Self {
        let n_grades = s.n_grades;
        let n_cohorts = s.n_cohorts();
        let n_areas = s.n_areas();
        let rw1_rank = s.rw1.rank();
        let spatial_cols = s.spatial_basis.ncols();
        let icar_rank = s.icar.rank();
        let beta = 0;
        let z_phi = beta + n_grades;
        let z_nu = z_phi + rw1_rank;
        let z_e = z_nu + n_cohorts;
        let z_s = z_e + n_areas;
        let z_zeta = z_s + spatial_cols;
        let hyper = z_zeta + icar_rank * rw1_rank;
        Self {
            n_grades,
            n_cohorts,
            n_areas,
            rw1_rank,
            spatial_cols,
            icar_rank,
            beta,
            z_phi,
            z_nu,
            z_e,
            z_s,
            z_zeta,
            hyper,
            dim: hyper + HYPER_NAMES.len(),
        }
    }
}

/// Natural-scale quantities implied by one parameter vector.
#[derive(Debug, Clone)]
pub struct Latent {
    pub beta: Vec<f64>,
    pub phi: DVector<f64>,
    pub nu: DVector<f64>,
    pub e: DVector<f64>,
    pub s: DVector<f64>,
    pub u: DVector<f64>,
    /// Areas x cohorts.
    pub zeta: DMatrix<f64>,
    pub sigma_phi: f64,
    pub sigma_nu: f64,
    pub sigma_u: f64,
    pub lambda: f64,
    pub sigma_zeta: f64,
    pub rho: f64,
}

impl Latent {
    pub fn eta(&self, b: usize, i: usize, k: usize) -> f64 {
        self.beta[k] + self.phi[b] + self.nu[b] + self.u[i] + self.zeta[(i, b)]
    }
}

#[derive(Debug, Clone)]
struct DomainCells {
    b: usize,
    i: usize,
    k: usize,
    /// (n, y, multiplicity, ln C(n, y))
    cells: Vec<(u32, u32, f64, f64)>,
    max_n: usize,
}

#[derive(Debug, Clone)]
pub struct SpatialModel {
    pub structure: LatentStructure,
    pub layout: ParamLayout,
    domains: Vec<DomainCells>,
    max_n: usize,
    sd_prior: SdPrior,
    mixing_prior: MixingPrior,
    rho_prior: RhoPrior,
    beta_precision: f64,
    sums_s: RisingSums,
    sums_a: RisingSums,
    sums_b: RisingSums,
}

impl SpatialModel {
    /// Groups cells by (cohort, area, grade). Cells at grades beyond the
    /// modelled intercepts are dropped: they only hold exits.
    pub fn new(
        cells: &[GradeCountCell],
        structure: LatentStructure,
        priors: &PcPriorConfig,
    ) -> Result<Self, SpatialError> {
        let layout = ParamLayout::new(&structure);
        let mut grouped: BTreeMap<(usize, usize, usize), BTreeMap<(u32, u32), f64>> = BTreeMap::new();
        for c in cells {
            if c.grade as usize >= structure.n_grades {
                continue;
            }
            let b = structure
                .cohort_index(c.cohort)
                .ok_or(SpatialError::UnknownCohort(c.cohort))?;
            let i = structure
                .area_index(&c.area)
                .ok_or_else(|| SpatialError::UnknownArea(c.area.to_string()))?;
            if c.n == 0 || c.y > c.n {
                return Err(SpatialError::Domain(format!("cell with n = {}, y = {}", c.n, c.y)));
            }
            *grouped
                .entry((b, i, c.grade as usize))
                .or_default()
                .entry((c.n, c.y))
                .or_insert(0.0) += 1.0;
        }
        if grouped.is_empty() {
            return Err(SpatialError::NoData);
        }
        let domains: Vec<DomainCells> = grouped
            .into_iter()
            .map(|((b, i, k), m)| {
                let max_n = m.keys().map(|&(n, _)| n as usize).max().unwrap_or(0);
                DomainCells {
                    b,
                    i,
                    k,
                    cells: m
                        .into_iter()
                        .map(|((n, y), cnt)| (n, y, cnt, ln_choose(n, y)))
                        .collect(),
                    max_n,
                }
            })
            .collect();
        let max_n = domains.iter().map(|d| d.max_n).max().unwrap_or(0);
        let mixing_prior = MixingPrior::new(
            &structure.spatial_cov_eigenvalues,
            priors.lambda_upper,
            priors.lambda_prob,
        )?;
        Ok(Self {
            layout,
            domains,
            max_n,
            sd_prior: SdPrior::new(priors.sigma_upper, priors.sigma_prob)?,
            mixing_prior,
            rho_prior: RhoPrior::new(priors.rho_upper, priors.rho_prob)?,
            beta_precision: priors.beta_precision,
            structure,
            sums_s: RisingSums::default(),
            sums_a: RisingSums::default(),
            sums_b: RisingSums::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    /// Pooled observed hazard per modelled grade.
    pub fn pooled_hazards(&self) -> Vec<f64> {
        let mut acc = vec![(0.0, 0.0); self.layout.n_grades];
        for d in &self.domains {
            for &(n, y, cnt, _) in &d.cells {
                acc[d.k].0 += cnt * f64::from(n);
                acc[d.k].1 += cnt * f64::from(y);
            }
        }
        acc.into_iter()
            .map(|(n, y)| if n > 0.0 { (y / n).clamp(0.01, 0.99) } else { 0.5 })
            .collect()
    }

    pub fn latent(&self, q: &[f64]) -> Latent {
        latent_of(&self.structure, &self.layout, q)
    }

    fn mixing_term(&self, x: f64) -> f64 {
        let lambda = expit(x);
        self.mixing_prior.log_density(lambda) + lambda.ln() + (1.0 - lambda).ln()
    }

    /// Log posterior (up to a constant) and its gradient.
    pub fn log_density_grad(&mut self, q: &[f64], grad: &mut [f64]) -> f64 {
        let l = self.layout.clone();
        let lat = self.latent(q);
        grad.iter_mut().for_each(|g| *g = 0.0);

        // likelihood
        let s_rho = (1.0 - lat.rho) / lat.rho;
        self.sums_s.fill(s_rho, self.max_n);
        let mut d_eta = DMatrix::<f64>::zeros(l.n_areas, l.n_cohorts); // sum over grades
        let mut d_s_total = 0.0;
        let mut lp = 0.0;
        for d in &self.domains {
            let h = expit(lat.eta(d.b, d.i, d.k));
            let a = h * s_rho;
            let bb = (1.0 - h) * s_rho;
            self.sums_a.fill(a, d.max_n);
            self.sums_b.fill(bb, d.max_n);
            let mut dh = 0.0;
            for &(n, y, cnt, lc) in &d.cells {
                let (n, y) = (n as usize, y as usize);
                let sa = &self.sums_a;
                let sb = &self.sums_b;
                let ss = &self.sums_s;
                lp += cnt * (lc + sa.log[y] + sb.log[n - y] - ss.log[n]);
                let a1 = sa.inv[y];
                let b1 = sb.inv[n - y];
                dh += cnt * s_rho * (a1 - b1);
                d_s_total += cnt * (h * a1 + (1.0 - h) * b1 - ss.inv[n]);
            }
            let de = dh * h * (1.0 - h);
            grad[l.beta + d.k] += de;
            d_eta[(d.i, d.b)] += de;
        }
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }

        let st = &self.structure;
        // d/d phi_b = d/d nu_b = column sums; d/d u_i = row sums; d/d zeta = d_eta
        let col: DVector<f64> = DVector::from_iterator(l.n_cohorts, d_eta.column_iter().map(|c| c.sum()));
        let row: DVector<f64> = DVector::from_iterator(l.n_areas, d_eta.row_iter().map(|r| r.sum()));

        let g_phi = st.rw1.basis.transpose() * &col * lat.sigma_phi;
        grad[l.z_phi..l.z_phi + l.rw1_rank].copy_from_slice(g_phi.as_slice());
        let g_nu = &col * lat.sigma_nu;
        grad[l.z_nu..l.z_nu + l.n_cohorts].copy_from_slice(g_nu.as_slice());
        let g_e = &row * (lat.sigma_u * (1.0 - lat.lambda).sqrt());
        grad[l.z_e..l.z_e + l.n_areas].copy_from_slice(g_e.as_slice());
        let g_s = st.spatial_basis.transpose() * &row * (lat.sigma_u * lat.lambda.sqrt());
        grad[l.z_s..l.z_s + l.spatial_cols].copy_from_slice(g_s.as_slice());
        if l.icar_rank * l.rw1_rank > 0 {
            let g_z = st.icar.basis.transpose() * &d_eta * &st.rw1.basis * lat.sigma_zeta;
            grad[l.z_zeta..l.hyper].copy_from_slice(g_z.as_slice());
        }
        let hg = &mut grad[l.hyper..];
        hg[0] = col.dot(&lat.phi);
        hg[1] = col.dot(&lat.nu);
        hg[2] = row.dot(&lat.u);
        let lam = lat.lambda;
        let du_dx = (&lat.e * (-lam * (1.0 - lam).sqrt()) + &lat.s * (lam.sqrt() * (1.0 - lam))) * (0.5 * lat.sigma_u);
        hg[3] = row.dot(&du_dx);
        hg[4] = (d_eta.component_mul(&lat.zeta)).sum();
        hg[5] = -s_rho * d_s_total;

        // priors on whitened coordinates and intercepts
        for (j, &v) in q.iter().enumerate().take(l.hyper) {
            if j < l.z_phi {
                lp -= 0.5 * self.beta_precision * v * v;
                grad[j] -= self.beta_precision * v;
            } else {
                lp -= 0.5 * v * v;
                grad[j] -= v;
            }
        }
        // sd priors with log Jacobian
        let hq = &q[l.hyper..];
        for &j in &[0usize, 1, 2, 4] {
            let sigma = hq[j].exp();
            lp += self.sd_prior.log_density(sigma) + hq[j];
            grad[l.hyper + j] += -self.sd_prior.rate * sigma + 1.0;
        }
        // mixing prior with log Jacobian, derivative by central difference
        let mt = self.mixing_term(hq[3]);
        if !mt.is_finite() {
            return f64::NEG_INFINITY;
        }
        lp += mt;
        let step = 1e-5;
        grad[l.hyper + 3] += (self.mixing_term(hq[3] + step) - self.mixing_term(hq[3] - step)) / (2.0 * step);
        // rho prior with log Jacobian
        let rho = lat.rho;
        lp += self.rho_prior.log_density(rho) + rho.ln() + (1.0 - rho).ln();
        grad[l.hyper + 5] += -self.rho_prior.rate * rho * (1.0 - rho) + (1.0 - rho) - rho;
        lp
    }

    /// Column names for stored draws.
    pub fn column_names(&self) -> Vec<String> {
        column_names(&self.structure)
    }

    /// Natural-scale parameters stored per draw, ordered as [`column_names`].
    pub fn natural(&self, q: &[f64]) -> Vec<f64> {
        let lat = self.latent(q);
        let mut v = lat.beta.clone();
        v.extend(lat.phi.iter());
        v.extend(lat.nu.iter());
        v.extend(lat.u.iter());
        v.extend(lat.s.iter());
        v.extend(lat.zeta.iter());
        v.extend([lat.sigma_phi, lat.sigma_nu, lat.sigma_u, lat.lambda, lat.sigma_zeta, lat.rho]);
        v
    }
}

pub(crate) fn latent_of(st: &LatentStructure, l: &ParamLayout, q: &[f64]) -> Latent {
    let h = &q[l.hyper..];
    let sigma_phi = h[0].exp();
    let sigma_nu = h[1].exp();
    let sigma_u = h[2].exp();
    let lambda = expit(h[3]);
    let sigma_zeta = h[4].exp();
    let rho = expit(h[5]);

    let z_phi = DVector::from_column_slice(&q[l.z_phi..l.z_phi + l.rw1_rank]);
    let phi = &st.rw1.basis * z_phi * sigma_phi;
    let nu = DVector::from_column_slice(&q[l.z_nu..l.z_nu + l.n_cohorts]) * sigma_nu;
    let e = DVector::from_column_slice(&q[l.z_e..l.z_e + l.n_areas]);
    let z_s = DVector::from_column_slice(&q[l.z_s..l.z_s + l.spatial_cols]);
    let s = &st.spatial_basis * z_s;
    let u = (&e * (1.0 - lambda).sqrt() + &s * lambda.sqrt()) * sigma_u;
    let z = DMatrix::from_column_slice(l.icar_rank, l.rw1_rank, &q[l.z_zeta..l.hyper]);
    let zeta = if l.icar_rank * l.rw1_rank == 0 {
        DMatrix::zeros(l.n_areas, l.n_cohorts)
    } else {
        &st.icar.basis * z * st.rw1.basis.transpose() * sigma_zeta
    };
    Latent {
        beta: q[l.beta..l.beta + l.n_grades].to_vec(),
        phi,
        nu,
        e,
        s,
        u,
        zeta,
        sigma_phi,
        sigma_nu,
        sigma_u,
        lambda,
        sigma_zeta,
        rho,
    }
}

/// `beta[k]`, `phi[b]`, `nu[b]`, `u[i]`, `s[i]`, `zeta[i,b]` (areas fastest), hyperparameters.
pub fn column_names(st: &LatentStructure) -> Vec<String> {
    let mut names: Vec<String> = (0..st.n_grades).map(|k| format!("beta[{k}]")).collect();
    names.extend(st.cohorts.iter().map(|b| format!("phi[{b}]")));
    names.extend(st.cohorts.iter().map(|b| format!("nu[{b}]")));
    names.extend(st.areas.iter().map(|a| format!("u[{a}]")));
    names.extend(st.areas.iter().map(|a| format!("s[{a}]")));
    for b in &st.cohorts {
        for a in &st.areas {
            names.push(format!("zeta[{a},{b}]"));
        }
    }
    names.extend(HYPER_NAMES.iter().map(|s| s.to_string()));
    names
}
