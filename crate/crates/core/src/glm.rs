//! Survey-weighted continuation-odds model
//! `logit h_{b,i,k} = beta_k + gamma_b + alpha_i`, fit by Newton/IRLS with a
//! design-based sandwich covariance.
//!
//! Grades are modelled up to the highest grade anybody survived past. Rows
//! at or above that grade are all exits, so their hazard is fixed at one
//! and they carry no information about the coefficients.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Id, RiskRow};
use crate::delta::{self, expit, DeltaError};
use crate::design::DesignIndex;
use crate::linalg;
use crate::weighted::{self, Domain, HazardCurve, Method, UysEstimate, Z90};

#[derive(Debug, Error)]
pub enum GlmError {
    #[error("no risk rows to fit")]
    EmptyRows,
    #[error("reference level {0} is not present in the data")]
    MissingReference(String),
    #[error("grade {0} has no risk rows")]
    EmptyGrade(usize),
    #[error("separation, fitted probabilities pinned at 0 or 1: {}", .cells.join("; "))]
    Separation { cells: Vec<String> },
    #[error("design matrix is rank deficient at {level}")]
    RankDeficient { level: String },
    #[error("fit is parameterized at {fit}, not at {target}")]
    WrongReference { fit: GlmTarget, target: GlmTarget },
    #[error("unknown domain {0}")]
    UnknownDomain(GlmTarget),
    #[error(transparent)]
    Delta(#[from] DeltaError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlmOptions {
    pub max_iter: usize,
    /// Convergence threshold on the Euclidean norm of the score.
    pub tol: f64,
    pub separation_eps: f64,
    /// Apply `n_h / (n_h - 1)` to the between-cluster score covariance.
    pub small_sample_correction: bool,
}

impl Default for GlmOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
            separation_eps: 1e-10,
            small_sample_correction: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmSpec {
    pub reference_cohort: i32,
    pub reference_area: Option<Id>,
    pub include_area_effects: bool,
    pub options: GlmOptions,
}

impl GlmSpec {
    pub fn cohort_only(reference_cohort: i32) -> Self {
        Self {
            reference_cohort,
            reference_area: None,
            include_area_effects: false,
            options: GlmOptions::default(),
        }
    }

    pub fn with_areas(reference_cohort: i32, reference_area: impl Into<Id>) -> Self {
        Self {
            reference_cohort,
            reference_area: Some(reference_area.into()),
            include_area_effects: true,
            options: GlmOptions::default(),
        }
    }
}

/// A (cohort, area) domain in the model's index sets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GlmTarget {
    pub cohort: i32,
    pub area: Option<Id>,
}

impl fmt::Display for GlmTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.area {
            Some(a) => write!(f, "(cohort {}, area {a})", self.cohort),
            None => write!(f, "(cohort {})", self.cohort),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlmFit {
    /// Grade intercepts for grades `0..beta.len()`.
    pub beta: Vec<f64>,
    pub cohorts: Vec<i32>,
    /// Cohort effects aligned with `cohorts`; zero at the reference.
    pub gamma: Vec<f64>,
    pub areas: Vec<Id>,
    /// Area effects aligned with `areas`; empty without area effects.
    pub alpha: Vec<f64>,
    pub reference: GlmTarget,
    /// Sandwich covariance of the free parameters, ordered as `param_names`.
    pub cov_full: DMatrix<f64>,
    pub param_names: Vec<String>,
    pub converged: bool,
    pub iterations: usize,
    pub score_norm: f64,
    pub log_likelihood: f64,
    pub singleton_strata: usize,
    domain_sizes: BTreeMap<GlmTarget, usize>,
}

impl GlmFit {
    pub fn k_fit(&self) -> usize {
        self.beta.len()
    }

    pub fn include_area_effects(&self) -> bool {
        !self.alpha.is_empty()
    }

    /// Covariance of the grade intercepts.
    pub fn cov_beta(&self) -> DMatrix<f64> {
        let k = self.k_fit();
        self.cov_full.view((0, 0), (k, k)).into_owned()
    }

    fn cohort_index(&self, cohort: i32) -> Option<usize> {
        self.cohorts.binary_search(&cohort).ok()
    }

    fn area_index(&self, area: Option<&str>) -> Result<Option<usize>, ()> {
        match (self.include_area_effects(), area) {
            (false, None) => Ok(None),
            (false, Some(_)) | (true, None) => Err(()),
            (true, Some(a)) => self
                .areas
                .binary_search_by(|x| x.as_ref().cmp(a))
                .map(Some)
                .map_err(|_| ()),
        }
    }

    fn locate(&self, target: &GlmTarget) -> Result<(usize, Option<usize>), GlmError> {
        let b = self
            .cohort_index(target.cohort)
            .ok_or_else(|| GlmError::UnknownDomain(target.clone()))?;
        let i = self
            .area_index(target.area.as_deref())
            .map_err(|()| GlmError::UnknownDomain(target.clone()))?;
        Ok((b, i))
    }

    /// Linear predictor by grade for a domain.
    pub fn logit_hazards(&self, target: &GlmTarget) -> Result<Vec<f64>, GlmError> {
        let (b, i) = self.locate(target)?;
        let shift = self.gamma[b] + i.map_or(0.0, |i| self.alpha[i]);
        Ok(self.beta.iter().map(|&x| x + shift).collect())
    }

    pub fn hazards(&self, target: &GlmTarget) -> Result<Vec<f64>, GlmError> {
        Ok(self.logit_hazards(target)?.into_iter().map(expit).collect())
    }

    /// Persons (grade-0 rows) observed in a domain.
    pub fn domain_size(&self, target: &GlmTarget) -> usize {
        self.domain_sizes.get(target).copied().unwrap_or(0)
    }

    pub fn targets(&self) -> Vec<GlmTarget> {
        let mut out = Vec::new();
        for &cohort in &self.cohorts {
            if self.include_area_effects() {
                for a in &self.areas {
                    out.push(GlmTarget {
                        cohort,
                        area: Some(a.clone()),
                    });
                }
            } else {
                out.push(GlmTarget { cohort, area: None });
            }
        }
        out
    }

    /// Exact linear reparameterization with `target` as the reference.
    /// Equivalent to refitting, since both the MLE and the sandwich are
    /// equivariant under invertible linear maps of the coefficients.
    pub fn reparameterize(&self, target: &GlmTarget) -> Result<GlmFit, GlmError> {
        let (nb, ni) = self.locate(target)?;
        let k = self.k_fit();
        let nc = self.cohorts.len();
        let na = self.alpha.len();
        let (ob, oi) = self.locate(&self.reference)?;

        // full = [beta, gamma(all cohorts), alpha(all areas)]
        let full_dim = k + nc + na;
        let old_free = free_columns(k, nc, ob, na, oi);
        let new_free = free_columns(k, nc, nb, na, ni);

        // map: free_old -> full_old
        let mut embed = DMatrix::<f64>::zeros(full_dim, old_free.len());
        for (col, &full) in old_free.iter().enumerate() {
            embed[(full, col)] = 1.0;
        }
        // full_old -> full_new
        let mut shift = DMatrix::<f64>::identity(full_dim, full_dim);
        for row in 0..k {
            shift[(row, k + nb)] += 1.0;
            if let Some(ni) = ni {
                shift[(row, k + nc + ni)] += 1.0;
            }
        }
        for b in 0..nc {
            shift[(k + b, k + nb)] -= 1.0;
        }
        if let Some(ni) = ni {
            for i in 0..na {
                shift[(k + nc + i, k + nc + ni)] -= 1.0;
            }
        }
        let mut select = DMatrix::<f64>::zeros(new_free.len(), full_dim);
        for (row, &full) in new_free.iter().enumerate() {
            select[(row, full)] = 1.0;
        }
        let full_old: Vec<f64> = self
            .beta
            .iter()
            .chain(&self.gamma)
            .chain(&self.alpha)
            .copied()
            .collect();
        let full_new = &shift * DVector::from_vec(full_old);
        let lmap = &select * &shift * &embed;
        let mut cov = &lmap * &self.cov_full * lmap.transpose();
        linalg::symmetrize(&mut cov);

        let mut out = self.clone();
        out.beta = full_new.rows(0, k).iter().copied().collect();
        out.gamma = full_new.rows(k, nc).iter().copied().collect();
        out.alpha = full_new.rows(k + nc, na).iter().copied().collect();
        out.gamma[nb] = 0.0;
        if let Some(ni) = ni {
            out.alpha[ni] = 0.0;
        }
        out.reference = target.clone();
        out.cov_full = cov;
        out.param_names = param_names(k, &self.cohorts, nb, &self.areas, ni);
        Ok(out)
    }

    /// Coefficient summary for JSON output.
    pub fn summary(&self, include_cov: bool) -> GlmSummary {
        let free = self.free_values();
        let coefficients = self
            .param_names
            .iter()
            .zip(free)
            .enumerate()
            .map(|(j, (name, estimate))| Coefficient {
                name: name.clone(),
                estimate,
                se: self.cov_full[(j, j)].max(0.0).sqrt(),
            })
            .collect();
        GlmSummary {
            reference: self.reference.clone(),
            coefficients,
            converged: self.converged,
            iterations: self.iterations,
            score_norm: self.score_norm,
            log_likelihood: self.log_likelihood,
            singleton_strata: self.singleton_strata,
            covariance: include_cov.then(|| {
                (0..self.cov_full.nrows())
                    .map(|i| self.cov_full.row(i).iter().copied().collect())
                    .collect()
            }),
        }
    }

    fn free_values(&self) -> Vec<f64> {
        let ref_b = self.cohort_index(self.reference.cohort).expect("reference cohort");
        let ref_i = self
            .area_index(self.reference.area.as_deref())
            .expect("reference area");
        let mut v = self.beta.clone();
        v.extend(self.gamma.iter().enumerate().filter(|(b, _)| *b != ref_b).map(|(_, &g)| g));
        v.extend(
            self.alpha
                .iter()
                .enumerate()
                .filter(|(i, _)| Some(*i) != ref_i)
                .map(|(_, &a)| a),
        );
        v
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlmSummary {
    pub reference: GlmTarget,
    pub coefficients: Vec<Coefficient>,
    pub converged: bool,
    pub iterations: usize,
    pub score_norm: f64,
    pub log_likelihood: f64,
    pub singleton_strata: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
}

fn free_columns(k: usize, nc: usize, ref_b: usize, na: usize, ref_i: Option<usize>) -> Vec<usize> {
    let mut cols: Vec<usize> = (0..k).collect();
    cols.extend((0..nc).filter(|&b| b != ref_b).map(|b| k + b));
    cols.extend((0..na).filter(|&i| Some(i) != ref_i).map(|i| k + nc + i));
    cols
}

fn param_names(k: usize, cohorts: &[i32], ref_b: usize, areas: &[Id], ref_i: Option<usize>) -> Vec<String> {
    let mut names: Vec<String> = (0..k).map(|g| format!("grade {g}")).collect();
    names.extend(
        cohorts
            .iter()
            .enumerate()
            .filter(|(b, _)| *b != ref_b)
            .map(|(_, c)| format!("cohort {c}")),
    );
    if ref_i.is_some() {
        names.extend(
            areas
                .iter()
                .enumerate()
                .filter(|(i, _)| Some(*i) != ref_i)
                .map(|(_, a)| format!("area {a}")),
        );
    }
    names
}

/// Rows aggregated by (cluster, grade, cohort, area).
#[derive(Debug, Clone, Copy)]
struct Cell {
    cluster: usize,
    grade: usize,
    cohort: usize,
    area: usize,
    w: f64,
    wz: f64,
}

/// Aggregated rows and level sets, shared by every reference choice.
struct Prepared {
    cells: Vec<Cell>,
    k_fit: usize,
    cohorts: Vec<i32>,
    areas: Vec<Id>,
    include_area: bool,
    index: DesignIndex,
    weight_scale: f64,
    domain_sizes: BTreeMap<GlmTarget, usize>,
}

impl Prepared {
    fn new(rows: &[RiskRow], include_area: bool) -> Result<Self, GlmError> {
        if rows.is_empty() {
            return Err(GlmError::EmptyRows);
        }
        let k_fit = rows
            .iter()
            .map(|r| r.grade as usize + usize::from(!r.event))
            .max()
            .unwrap_or(0);
        let mut cohorts: Vec<i32> = rows.iter().map(|r| r.cohort).collect();
        cohorts.sort_unstable();
        cohorts.dedup();
        let mut areas: Vec<Id> = rows.iter().map(|r| r.area_id.clone()).collect();
        areas.sort_unstable();
        areas.dedup();
        let area_pos: HashMap<&str, usize> =
            areas.iter().enumerate().map(|(i, a)| (a.as_ref(), i)).collect();

        let index = DesignIndex::from_rows(rows);
        let mut map: HashMap<(usize, usize, usize, usize), (f64, f64)> = HashMap::new();
        let mut domain_sizes = BTreeMap::new();
        let mut total_w = 0.0;
        let mut n_used = 0usize;
        for r in rows {
            let b = cohorts.binary_search(&r.cohort).expect("cohort listed");
            let i = area_pos[r.area_id.as_ref()];
            if r.grade == 0 {
                let area = include_area.then(|| r.area_id.clone());
                *domain_sizes
                    .entry(GlmTarget {
                        cohort: r.cohort,
                        area,
                    })
                    .or_insert(0) += 1;
            }
            let g = r.grade as usize;
            if g >= k_fit {
                continue;
            }
            let c = index.cluster_index(&r.cluster_id).expect("indexed cluster");
            let e = map.entry((c, g, b, i)).or_insert((0.0, 0.0));
            e.0 += r.weight;
            if r.event {
                e.1 += r.weight;
            }
            total_w += r.weight;
            n_used += 1;
        }
        let mut keys: Vec<_> = map.into_iter().collect();
        keys.sort_by(|a, b| a.0.cmp(&b.0));
        let cells = keys
            .into_iter()
            .map(|((cluster, grade, cohort, area), (w, wz))| Cell {
                cluster,
                grade,
                cohort,
                area,
                w,
                wz,
            })
            .collect();
        let weight_scale = if total_w > 0.0 { n_used as f64 / total_w } else { 1.0 };
        Ok(Self {
            cells,
            k_fit,
            cohorts,
            areas,
            include_area,
            index,
            weight_scale,
            domain_sizes,
        })
    }

    /// Levels whose rows are all exits or all continuations.
    fn marginal_separation(&self) -> Result<(), GlmError> {
        let mut grade = vec![(0.0, 0.0); self.k_fit];
        let mut cohort = vec![(0.0, 0.0); self.cohorts.len()];
        let mut area = vec![(0.0, 0.0); self.areas.len()];
        for c in &self.cells {
            for (slot, idx) in [(&mut grade, c.grade), (&mut cohort, c.cohort), (&mut area, c.area)] {
                slot[idx].0 += c.w;
                slot[idx].1 += c.wz;
            }
        }
        if let Some(g) = grade.iter().position(|&(w, _)| w == 0.0) {
            return Err(GlmError::EmptyGrade(g));
        }
        let describe = |label: String, (w, wz): (f64, f64)| -> Option<String> {
            if wz == 0.0 {
                Some(format!("{label} (no exits)"))
            } else if wz >= w {
                Some(format!("{label} (all exits)"))
            } else {
                None
            }
        };
        let mut cells: Vec<String> = grade
            .iter()
            .enumerate()
            .filter_map(|(g, &s)| describe(format!("grade {g}"), s))
            .collect();
        cells.extend(
            cohort
                .iter()
                .zip(&self.cohorts)
                .filter_map(|(&s, b)| describe(format!("cohort {b}"), s)),
        );
        if self.include_area {
            cells.extend(
                area.iter()
                    .zip(&self.areas)
                    .filter_map(|(&s, a)| describe(format!("area {a}"), s)),
            );
        }
        if cells.is_empty() {
            Ok(())
        } else {
            Err(GlmError::Separation { cells })
        }
    }

    fn fit(&self, reference: &GlmTarget, options: &GlmOptions) -> Result<GlmFit, GlmError> {
        let k = self.k_fit;
        let nc = self.cohorts.len();
        let ref_b = self
            .cohorts
            .binary_search(&reference.cohort)
            .map_err(|_| GlmError::MissingReference(format!("cohort {}", reference.cohort)))?;
        let ref_i = if self.include_area {
            let a = reference
                .area
                .as_deref()
                .ok_or_else(|| GlmError::MissingReference("area (none given)".into()))?;
            Some(
                self.areas
                    .binary_search_by(|x| x.as_ref().cmp(a))
                    .map_err(|_| GlmError::MissingReference(format!("area {a}")))?,
            )
        } else {
            None
        };
        self.marginal_separation()?;

        let na = if self.include_area { self.areas.len() } else { 0 };
        // column of each level, None for reference levels
        let cohort_col: Vec<Option<usize>> = {
            let mut next = k;
            (0..nc)
                .map(|b| {
                    (b != ref_b).then(|| {
                        next += 1;
                        next - 1
                    })
                })
                .collect()
        };
        let area_col: Vec<Option<usize>> = {
            let mut next = k + nc - 1;
            (0..na)
                .map(|i| {
                    (Some(i) != ref_i).then(|| {
                        next += 1;
                        next - 1
                    })
                })
                .collect()
        };
        let p = k + nc - 1 + na.saturating_sub(1);
        let names = param_names(k, &self.cohorts, ref_b, &self.areas, ref_i);
        let cols = |c: &Cell| -> [Option<usize>; 3] {
            [
                Some(c.grade),
                cohort_col[c.cohort],
                if self.include_area { area_col[c.area] } else { None },
            ]
        };
        let eta = |theta: &DVector<f64>, c: &Cell| -> f64 {
            cols(c).iter().flatten().map(|&j| theta[j]).sum()
        };
        let scale = self.weight_scale;
        let loglik = |theta: &DVector<f64>| -> f64 {
            self.cells
                .iter()
                .map(|c| {
                    let e = eta(theta, c);
                    scale * (-c.wz * softplus(-e) - (c.w - c.wz) * softplus(e))
                })
                .sum()
        };

        // start from pooled grade hazards
        let mut theta = DVector::<f64>::zeros(p);
        {
            let mut acc = vec![(0.0, 0.0); k];
            for c in &self.cells {
                acc[c.grade].0 += c.w;
                acc[c.grade].1 += c.wz;
            }
            for (g, (w, wz)) in acc.into_iter().enumerate() {
                theta[g] = delta::logit((wz / w).clamp(1e-6, 1.0 - 1e-6));
            }
        }

        let mut ll = loglik(&theta);
        let mut converged = false;
        let mut iterations = 0;
        let mut score_norm = f64::INFINITY;
        for iter in 0..=options.max_iter {
            let (score, info) = self.score_info(&theta, &cols, &eta, scale, p);
            score_norm = score.norm();
            if score_norm < options.tol {
                converged = true;
                iterations = iter;
                break;
            }
            if iter == options.max_iter {
                iterations = iter;
                break;
            }
            let l = linalg::cholesky(&info, 1e-12).map_err(|j| GlmError::RankDeficient {
                level: names[j].clone(),
            })?;
            let step = linalg::chol_solve(&l, &score);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let cand = &theta + &step * t;
                let ll_c = loglik(&cand);
                if ll_c.is_finite() && ll_c >= ll - 1e-12 * ll.abs().max(1.0) {
                    theta = cand;
                    ll = ll_c;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                iterations = iter + 1;
                break;
            }
        }
        if !converged {
            log::warn!("IRLS stopped after {iterations} iterations with score norm {score_norm:e}");
        }

        let mut pinned: Vec<String> = Vec::new();
        for c in &self.cells {
            let pr = expit(eta(&theta, c));
            if pr < options.separation_eps || pr > 1.0 - options.separation_eps {
                let mut label = format!("grade {}, cohort {}", c.grade, self.cohorts[c.cohort]);
                if self.include_area {
                    label.push_str(&format!(", area {}", self.areas[c.area]));
                }
                if !pinned.contains(&label) {
                    pinned.push(label);
                }
            }
        }
        if !pinned.is_empty() {
            return Err(GlmError::Separation { cells: pinned });
        }

        // sandwich on the original weights
        let (_, info) = self.score_info(&theta, &cols, &eta, 1.0, p);
        let l = linalg::cholesky(&info, 1e-12).map_err(|j| GlmError::RankDeficient {
            level: names[j].clone(),
        })?;
        let a_inv = linalg::chol_inverse(&l);
        let mut totals = DMatrix::<f64>::zeros(self.index.n_clusters(), p);
        for c in &self.cells {
            let r = c.wz - c.w * expit(eta(&theta, c));
            for j in cols(c).iter().flatten() {
                totals[(c.cluster, *j)] += r;
            }
        }
        let lin = self.index.covariance(&totals, options.small_sample_correction);
        let mut cov = &a_inv * lin.cov * &a_inv;
        linalg::symmetrize(&mut cov);

        let beta = theta.rows(0, k).iter().copied().collect();
        let gamma = cohort_col.iter().map(|c| c.map_or(0.0, |j| theta[j])).collect();
        let alpha = area_col.iter().map(|c| c.map_or(0.0, |j| theta[j])).collect();
        Ok(GlmFit {
            beta,
            cohorts: self.cohorts.clone(),
            gamma,
            areas: self.areas.clone(),
            alpha,
            reference: GlmTarget {
                cohort: reference.cohort,
                area: ref_i.map(|i| self.areas[i].clone()),
            },
            cov_full: cov,
            param_names: names,
            converged,
            iterations,
            score_norm,
            log_likelihood: ll / scale,
            singleton_strata: lin.singleton_strata,
            domain_sizes: self.domain_sizes.clone(),
        })
    }

    fn score_info(
        &self,
        theta: &DVector<f64>,
        cols: &dyn Fn(&Cell) -> [Option<usize>; 3],
        eta: &dyn Fn(&DVector<f64>, &Cell) -> f64,
        scale: f64,
        p: usize,
    ) -> (DVector<f64>, DMatrix<f64>) {
        let mut score = DVector::<f64>::zeros(p);
        let mut info = DMatrix::<f64>::zeros(p, p);
        for c in &self.cells {
            let pr = expit(eta(theta, c));
            let r = scale * (c.wz - c.w * pr);
            let v = scale * c.w * pr * (1.0 - pr);
            let idx = cols(c);
            for a in idx.iter().flatten() {
                score[*a] += r;
                for b in idx.iter().flatten() {
                    info[(*a, *b)] += v;
                }
            }
        }
        (score, info)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Fits the model at the reference levels named in `spec`.
pub fn fit_survey_glm(rows: &[RiskRow], spec: &GlmSpec) -> Result<GlmFit, GlmError> {
    let prepared = Prepared::new(rows, spec.include_area_effects)?;
    let reference = GlmTarget {
        cohort: spec.reference_cohort,
        area: spec
            .reference_area
            .clone()
            .or_else(|| spec.include_area_effects.then(|| prepared.areas[0].clone())),
    };
    prepared.fit(&reference, &spec.options)
}

/// Refits the model once per target, each time using the target as the
/// reference domain so its grade intercepts are the target's logit hazards.
pub fn refit_per_reference(
    rows: &[RiskRow],
    spec: &GlmSpec,
    targets: &[GlmTarget],
) -> Result<BTreeMap<GlmTarget, GlmFit>, GlmError> {
    let prepared = Prepared::new(rows, spec.include_area_effects)?;
    let mut out = BTreeMap::new();
    for t in targets {
        if !prepared.domain_sizes.contains_key(t) {
            return Err(GlmError::UnknownDomain(t.clone()));
        }
        out.insert(t.clone(), prepared.fit(t, &spec.options)?);
    }
    Ok(out)
}

/// UYS for the fit's reference domain, with a delta-method interval from
/// the grade-intercept covariance.
pub fn glm_uys(fit: &GlmFit, target: &GlmTarget) -> Result<UysEstimate, GlmError> {
    if &fit.reference != target {
        return Err(GlmError::WrongReference {
            fit: fit.reference.clone(),
            target: target.clone(),
        });
    }
    let mean = delta::uys_from_hazard_slice(&fit.beta.iter().map(|&b| expit(b)).collect::<Vec<_>>());
    let var = delta::delta_var_uys(&fit.beta, &fit.cov_beta())?;
    Ok(UysEstimate::normal(
        mean,
        var.sqrt(),
        Z90,
        fit.domain_size(target),
        Method::Glm,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OddsKind {
    Grade,
    Band,
}

/// Level bands by completed years: none, some primary, completed primary,
/// lower secondary, upper secondary, post-secondary.
pub const LEVEL_BANDS: [(&str, u32, Option<u32>); 6] = [
    ("none", 0, Some(0)),
    ("some_primary", 1, Some(6)),
    ("completed_primary", 7, Some(7)),
    ("lower_secondary", 8, Some(11)),
    ("upper_secondary", 12, Some(13)),
    ("post_secondary", 14, None),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsCell {
    pub group: String,
    pub kind: OddsKind,
    pub label: String,
    /// `None` where the cell is empty or has no exits or no continuations.
    pub log_odds: Option<f64>,
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    /// Largest standardized residual from an additive group + grade fit.
    pub max_abs_z: f64,
    pub group: String,
    pub grade: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsTable {
    pub cells: Vec<OddsCell>,
    pub deviation: Option<Deviation>,
}

/// Weighted log-odds of exit by group (cohort, optionally split by urban)
/// and by grade and level band, with a parallelism statistic.
pub fn proportional_odds_table(rows: &[RiskRow], by_urban: bool) -> OddsTable {
    let index = DesignIndex::from_rows(rows);
    let k_max = rows.iter().map(|r| r.grade).max().unwrap_or(0);
    let mut groups: Vec<(i32, Option<bool>)> = rows
        .iter()
        .map(|r| (r.cohort, by_urban.then_some(r.urban)))
        .collect();
    groups.sort_unstable();
    groups.dedup();

    let mut cells = Vec::new();
    // (group idx, grade, log-odds, se) for the deviation fit
    let mut grid: Vec<(usize, usize, f64, f64)> = Vec::new();
    let mut labels = Vec::new();
    for (gi, &(cohort, urban)) in groups.iter().enumerate() {
        let label = match urban {
            None => cohort.to_string(),
            Some(true) => format!("{cohort}/urban"),
            Some(false) => format!("{cohort}/rural"),
        };
        labels.push(label.clone());
        let domain = Domain {
            cohort,
            area: None,
            urban,
        };
        let h = weighted::modified_weighted_hazards_indexed(rows, &domain, k_max, &index);
        for g in 0..=k_max as usize {
            let (lo, se) = grade_log_odds(&h, g);
            if let (Some(l), Some(s)) = (lo, se) {
                if s > 0.0 {
                    grid.push((gi, g, l, s));
                }
            }
            cells.push(OddsCell {
                group: label.clone(),
                kind: OddsKind::Grade,
                label: g.to_string(),
                log_odds: lo,
                se,
            });
        }
        for (name, lo_g, hi_g) in LEVEL_BANDS {
            if lo_g > k_max {
                continue;
            }
            let hi_g = hi_g.unwrap_or(k_max).min(k_max);
            let (lo, se) = band_log_odds(&h, lo_g as usize, hi_g as usize);
            cells.push(OddsCell {
                group: label.clone(),
                kind: OddsKind::Band,
                label: name.to_string(),
                log_odds: lo,
                se,
            });
        }
    }

    let deviation = additive_deviation(&grid, groups.len(), k_max as usize + 1).map(|(z, g, k)| {
        Deviation {
            max_abs_z: z,
            group: labels[g].clone(),
            grade: k,
        }
    });
    OddsTable { cells, deviation }
}

fn grade_log_odds(h: &HazardCurve, g: usize) -> (Option<f64>, Option<f64>) {
    let p = h.hazards[g];
    if !h.defined[g] || p <= 0.0 || p >= 1.0 {
        return (None, None);
    }
    let se = h
        .cov
        .as_ref()
        .map(|c| c[(g, g)].max(0.0).sqrt() / (p * (1.0 - p)));
    (Some(delta::logit(p)), se)
}

/// Log-odds of exiting somewhere in grades `lo..=hi` given reaching `lo`.
fn band_log_odds(h: &HazardCurve, lo: usize, hi: usize) -> (Option<f64>, Option<f64>) {
    if !(lo..=hi).all(|g| h.defined[g]) {
        return (None, None);
    }
    let stay: f64 = (lo..=hi).map(|g| 1.0 - h.hazards[g]).product();
    let q = 1.0 - stay;
    if q <= 0.0 || q >= 1.0 {
        return (None, None);
    }
    let se = h.cov.as_ref().map(|c| {
        let n = h.hazards.len();
        let mut grad = vec![0.0; n];
        for j in lo..=hi {
            grad[j] = (lo..=hi)
                .filter(|&k| k != j)
                .map(|k| 1.0 - h.hazards[k])
                .product();
        }
        delta::quadratic_form(&grad, c).sqrt() / (q * (1.0 - q))
    });
    (Some(delta::logit(q)), se)
}

/// Inverse-variance additive fit `l = a_group + c_grade`; returns the
/// largest |residual / se| with its group and grade.
fn additive_deviation(
    grid: &[(usize, usize, f64, f64)],
    n_groups: usize,
    n_grades: usize,
) -> Option<(f64, usize, usize)> {
    if grid.is_empty() || n_groups < 2 {
        return None;
    }
    let mut a = vec![0.0; n_groups];
    let mut c = vec![0.0; n_grades];
    for _ in 0..200 {
        let mut num = vec![0.0; n_grades];
        let mut den = vec![0.0; n_grades];
        for &(g, k, l, s) in grid {
            let w = 1.0 / (s * s);
            num[k] += w * (l - a[g]);
            den[k] += w;
        }
        for k in 0..n_grades {
            if den[k] > 0.0 {
                c[k] = num[k] / den[k];
            }
        }
        let mut num = vec![0.0; n_groups];
        let mut den = vec![0.0; n_groups];
        for &(g, k, l, s) in grid {
            let w = 1.0 / (s * s);
            num[g] += w * (l - c[k]);
            den[g] += w;
        }
        let mut change: f64 = 0.0;
        for g in 0..n_groups {
            if den[g] > 0.0 {
                let v = num[g] / den[g];
                change = change.max((v - a[g]).abs());
                a[g] = v;
            }
        }
        if change < 1e-12 {
            break;
        }
    }
    grid.iter()
        .map(|&(g, k, l, s)| (((l - a[g] - c[k]) / s).abs(), g, k))
        .max_by(|x, y| x.0.total_cmp(&y.0))
}
