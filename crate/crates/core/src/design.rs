//! Stratified between-cluster (Taylor linearization) variance.
//!
//! Estimators hand in per-cluster totals of their linearized scores; the
//! covariance is the within-stratum spread of those totals. Clusters are the
//! primary sampling units and no finite-population correction is applied.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::data::{Id, PersonRecord, RiskRow};

/// Cluster and stratum bookkeeping for a survey sample.
#[derive(Debug, Clone)]
pub struct DesignIndex {
    clusters: Vec<Id>,
    cluster_pos: HashMap<Id, usize>,
    cluster_stratum: Vec<usize>,
    strata: Vec<Id>,
    stratum_sizes: Vec<usize>,
}

/// Covariance plus the number of strata that had a single cluster.
#[derive(Debug, Clone)]
pub struct Linearized {
    pub cov: DMatrix<f64>,
    pub singleton_strata: usize,
}

impl DesignIndex {
    fn from_pairs<'a>(pairs: impl Iterator<Item = (&'a Id, &'a Id)>) -> Self {
        let mut clusters = Vec::new();
        let mut cluster_pos = HashMap::new();
        let mut cluster_stratum = Vec::new();
        let mut strata = Vec::new();
        let mut stratum_pos: HashMap<Id, usize> = HashMap::new();
        let mut stratum_sizes = Vec::new();
        for (cluster, stratum) in pairs {
            if cluster_pos.contains_key(cluster) {
                continue;
            }
            let s = *stratum_pos.entry(stratum.clone()).or_insert_with(|| {
                strata.push(stratum.clone());
                stratum_sizes.push(0);
                strata.len() - 1
            });
            stratum_sizes[s] += 1;
            cluster_pos.insert(cluster.clone(), clusters.len());
            clusters.push(cluster.clone());
            cluster_stratum.push(s);
        }
        Self {
            clusters,
            cluster_pos,
            cluster_stratum,
            strata,
            stratum_sizes,
        }
    }

    pub fn from_records(records: &[PersonRecord]) -> Self {
        Self::from_pairs(records.iter().map(|r| (&r.cluster_id, &r.stratum_id)))
    }

    pub fn from_rows(rows: &[RiskRow]) -> Self {
        Self::from_pairs(rows.iter().map(|r| (&r.cluster_id, &r.stratum_id)))
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn n_strata(&self) -> usize {
        self.strata.len()
    }

    pub fn cluster_index(&self, cluster: &str) -> Option<usize> {
        self.cluster_pos.get(cluster).copied()
    }

    pub fn cluster_ids(&self) -> &[Id] {
        &self.clusters
    }

    /// Covariance of the estimator whose linearized cluster totals are the
    /// rows of `totals` (one row per cluster, in index order).
    ///
    /// With `small_sample` the stratum contribution is scaled by
    /// `n_h / (n_h - 1)`. Strata holding one cluster contribute nothing.
    pub fn covariance(&self, totals: &DMatrix<f64>, small_sample: bool) -> Linearized {
        assert_eq!(totals.nrows(), self.clusters.len(), "one row of totals per cluster");
        let p = totals.ncols();
        let mut means = vec![DVector::<f64>::zeros(p); self.strata.len()];
        for (c, &s) in self.cluster_stratum.iter().enumerate() {
            means[s] += totals.row(c).transpose();
        }
        for (m, &n) in means.iter_mut().zip(&self.stratum_sizes) {
            *m /= n as f64;
        }

        let mut cov = DMatrix::<f64>::zeros(p, p);
        let mut dev = DVector::<f64>::zeros(p);
        for (c, &s) in self.cluster_stratum.iter().enumerate() {
            let n = self.stratum_sizes[s];
            if n < 2 {
                continue;
            }
            let f = if small_sample { n as f64 / (n as f64 - 1.0) } else { 1.0 };
            dev.copy_from(&(totals.row(c).transpose() - &means[s]));
            cov.ger(f, &dev, &dev, 1.0);
        }
        let singleton_strata = self.stratum_sizes.iter().filter(|&&n| n == 1).count();
        if singleton_strata > 0 {
            log::warn!(
                "{singleton_strata} stratum/strata with a single cluster contribute no variance"
            );
        }
        Linearized {
            cov,
            singleton_strata,
        }
    }

    /// Scalar convenience wrapper over [`DesignIndex::covariance`].
    pub fn variance(&self, totals: &[f64], small_sample: bool) -> f64 {
        let m = DMatrix::from_column_slice(totals.len(), 1, totals);
        self.covariance(&m, small_sample).cov[(0, 0)]
    }
}
