//! Intrinsic GMRF structure matrices (ICAR, RW1, type-IV interaction),
//! their scaling to unit generalized variance, and the whitening bases the
//! sampler works in.
//!
//! Generalized variance is the geometric mean of the marginal variances of
//! the sum-to-zero constrained field, i.e. of the diagonal of the
//! Moore-Penrose inverse on each connected component.

use nalgebra::{DMatrix, SymmetricEigen};

use super::graph::{laplacian, SpatialGraph};
use super::SpatialError;
use crate::data::Id;

/// Eigenvalues below this fraction of the largest count as null.
const NULL_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ScaledStructure {
    /// Structure matrix after per-component scaling.
    pub matrix: DMatrix<f64>,
    /// Per-component multiplier applied to the raw matrix (islands: 1).
    pub factors: Vec<f64>,
    pub components: Vec<Vec<usize>>,
    /// `V diag(lambda)^{-1/2}` over the non-null eigenpairs, so that
    /// `basis * z` with `z ~ N(0, I)` has precision `matrix` under the
    /// sum-to-zero constraints. Islands have no columns here.
    pub basis: DMatrix<f64>,
    /// Moore-Penrose inverse of `matrix`.
    pub pseudo_inverse: DMatrix<f64>,
}

impl ScaledStructure {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Per-component generalized variances (components of size > 1).
    pub fn generalized_variances(&self) -> Vec<f64> {
        self.components
            .iter()
            .filter(|c| c.len() > 1)
            .map(|c| {
                let mean_log = c.iter().map(|&i| self.pseudo_inverse[(i, i)].ln()).sum::<f64>() / c.len() as f64;
                mean_log.exp()
            })
            .collect()
    }
}

fn sub_matrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

/// Scales each connected block of an intrinsic structure matrix to unit
/// generalized variance.
pub fn scale_structure(raw: &DMatrix<f64>, components: &[Vec<usize>]) -> Result<ScaledStructure, SpatialError> {
    let n = raw.nrows();
    let mut matrix = DMatrix::<f64>::zeros(n, n);
    let mut pseudo_inverse = DMatrix::<f64>::zeros(n, n);
    let mut factors = Vec::with_capacity(components.len());
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for comp in components {
        if comp.len() == 1 {
            factors.push(1.0);
            continue;
        }
        let sub = sub_matrix(raw, comp);
        let eig = SymmetricEigen::new(sub);
        let max = eig.eigenvalues.amax();
        let keep: Vec<usize> = (0..comp.len())
            .filter(|&j| eig.eigenvalues[j] > NULL_TOL * max)
            .collect();
        if keep.len() + 1 != comp.len() {
            return Err(SpatialError::Graph(format!(
                "component of size {} has {} null directions, expected 1",
                comp.len(),
                comp.len() - keep.len()
            )));
        }
        // raw pseudo-inverse and its marginal variances
        let mut pinv = DMatrix::<f64>::zeros(comp.len(), comp.len());
        for &j in &keep {
            let v = eig.eigenvectors.column(j);
            pinv += (v * v.transpose()) / eig.eigenvalues[j];
        }
        let mean_log = (0..comp.len()).map(|i| pinv[(i, i)].ln()).sum::<f64>() / comp.len() as f64;
        let factor = mean_log.exp();
        factors.push(factor);
        for (r, &gi) in comp.iter().enumerate() {
            for (c, &gj) in comp.iter().enumerate() {
                matrix[(gi, gj)] = factor * raw[(gi, gj)];
                pseudo_inverse[(gi, gj)] = pinv[(r, c)] / factor;
            }
        }
        for &j in &keep {
            let scale = 1.0 / (factor * eig.eigenvalues[j]).sqrt();
            let mut col = vec![0.0; n];
            for (r, &gi) in comp.iter().enumerate() {
                col[gi] = eig.eigenvectors[(r, j)] * scale;
            }
            columns.push(col);
        }
    }
    let basis = DMatrix::from_fn(n, columns.len(), |r, c| columns[c][r]);
    Ok(ScaledStructure {
        matrix,
        factors,
        components: components.to_vec(),
        basis,
        pseudo_inverse,
    })
}

/// First-order random walk structure over `n` equally spaced points.
pub fn rw1_structure(n: usize) -> DMatrix<f64> {
    let edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
    laplacian(n, &edges)
}

pub fn scaled_rw1(n: usize) -> Result<ScaledStructure, SpatialError> {
    let comps = if n == 0 { Vec::new() } else { vec![(0..n).collect()] };
    scale_structure(&rw1_structure(n), &comps)
}

/// Kronecker product `a (x) b`.
pub fn kronecker(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Type-IV interaction precision for `vec(zeta)` with areas varying fastest.
pub fn type_iv_precision(temporal: &DMatrix<f64>, spatial: &DMatrix<f64>) -> DMatrix<f64> {
    kronecker(temporal, spatial)
}

/// Linear constraints on `vec(zeta)` (areas fastest): within each connected
/// component of size > 1, every cohort's area sum and every area's cohort
/// sum is zero. Island rows pin the island's effects to zero.
pub fn type_iv_constraints(components: &[Vec<usize>], n_areas: usize, n_cohorts: usize) -> DMatrix<f64> {
    let dim = n_areas * n_cohorts;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for comp in components {
        if comp.len() == 1 {
            for b in 0..n_cohorts {
                let mut r = vec![0.0; dim];
                r[comp[0] + n_areas * b] = 1.0;
                rows.push(r);
            }
            continue;
        }
        for b in 0..n_cohorts {
            let mut r = vec![0.0; dim];
            for &i in comp {
                r[i + n_areas * b] = 1.0;
            }
            rows.push(r);
        }
        for &i in comp {
            let mut r = vec![0.0; dim];
            for b in 0..n_cohorts {
                r[i + n_areas * b] = 1.0;
            }
            rows.push(r);
        }
    }
    DMatrix::from_fn(rows.len(), dim, |r, c| rows[r][c])
}

/// Numerical rank via symmetric eigenvalues.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.amax();
    eig.eigenvalues.iter().filter(|&&v| v.abs() > NULL_TOL * max).count()
}

/// Everything the sampler needs about the latent field.
#[derive(Debug, Clone)]
pub struct LatentStructure {
    pub cohorts: Vec<i32>,
    pub areas: Vec<Id>,
    /// Grade intercepts modelled: grades `0..n_grades`.
    pub n_grades: usize,
    pub rw1: ScaledStructure,
    pub icar: ScaledStructure,
    pub island: Vec<bool>,
    /// `s = spatial_basis * z_s`: the scaled ICAR basis plus one unit
    /// column per island.
    pub spatial_basis: DMatrix<f64>,
    /// Eigenvalues of the covariance of the scaled spatial component `s`
    /// over all area directions (zero on constrained directions).
    pub spatial_cov_eigenvalues: Vec<f64>,
}

impl LatentStructure {
    pub fn n_areas(&self) -> usize {
        self.areas.len()
    }

    pub fn n_cohorts(&self) -> usize {
        self.cohorts.len()
    }

    pub fn cohort_index(&self, cohort: i32) -> Option<usize> {
        self.cohorts.iter().position(|&c| c == cohort)
    }

    pub fn area_index(&self, area: &str) -> Option<usize> {
        self.areas.iter().position(|a| a.as_ref() == area)
    }

    /// Dimension of the interaction's whitened coordinates.
    pub fn zeta_dim(&self) -> usize {
        self.icar.rank() * self.rw1.rank()
    }
}

/// Assembles the latent structure for a graph, an ordered cohort list and
/// the number of modelled grades.
pub fn build_latent_structure(
    graph: &SpatialGraph,
    cohorts: &[i32],
    n_grades: usize,
) -> Result<LatentStructure, SpatialError> {
    if cohorts.is_empty() {
        return Err(SpatialError::Graph("no cohorts".into()));
    }
    let mut sorted = cohorts.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let icar = graph.scaled_icar().clone();
    let rw1 = scaled_rw1(sorted.len())?;
    let n = graph.n_areas();
    let island: Vec<bool> = (0..n)
        .map(|i| graph.components().iter().any(|c| c.len() == 1 && c[0] == i))
        .collect();
    let n_islands = island.iter().filter(|&&x| x).count();
    let mut spatial_basis = DMatrix::<f64>::zeros(n, icar.rank() + n_islands);
    spatial_basis.columns_mut(0, icar.rank()).copy_from(&icar.basis);
    for (j, i) in island.iter().enumerate().filter(|(_, &x)| x).map(|(i, _)| i).enumerate() {
        spatial_basis[(i, icar.rank() + j)] = 1.0;
    }
    let cov = &spatial_basis * spatial_basis.transpose();
    let mut spatial_cov_eigenvalues: Vec<f64> = SymmetricEigen::new(cov)
        .eigenvalues
        .iter()
        .map(|&v| if v.abs() < 1e-10 { 0.0 } else { v })
        .collect();
    spatial_cov_eigenvalues.sort_by(f64::total_cmp);
    Ok(LatentStructure {
        cohorts: sorted,
        areas: graph.areas().to_vec(),
        n_grades,
        rw1,
        icar,
        island,
        spatial_basis,
        spatial_cov_eigenvalues,
    })
}
