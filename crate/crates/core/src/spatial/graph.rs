//! Area adjacency graphs and scaled ICAR structure matrices.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;

use super::structure::{scale_structure, ScaledStructure};
use super::SpatialError;
use crate::data::Id;

#[derive(Debug, Clone)]
pub struct SpatialGraph {
    areas: Vec<Id>,
    edges: Vec<(usize, usize)>,
    components: Vec<Vec<usize>>,
    /// ICAR Laplacian scaled per component to generalized variance 1.
    scaled: ScaledStructure,
}

impl SpatialGraph {
    /// Builds a graph over `areas` (order kept) from unordered edges.
    pub fn new(areas: Vec<Id>, edges: &[(Id, Id)]) -> Result<Self, SpatialError> {
        if areas.is_empty() {
            return Err(SpatialError::EmptyGraph);
        }
        let pos: BTreeMap<&str, usize> = areas.iter().enumerate().map(|(i, a)| (a.as_ref(), i)).collect();
        if pos.len() != areas.len() {
            return Err(SpatialError::Graph("duplicate area in area list".into()));
        }
        let mut seen = BTreeSet::new();
        let mut idx_edges = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            let i = *pos
                .get(a.as_ref())
                .ok_or_else(|| SpatialError::UnknownArea(a.to_string()))?;
            let j = *pos
                .get(b.as_ref())
                .ok_or_else(|| SpatialError::UnknownArea(b.to_string()))?;
            if i == j {
                return Err(SpatialError::Graph(format!("self-loop at area {a}")));
            }
            let key = (i.min(j), i.max(j));
            if !seen.insert(key) {
                return Err(SpatialError::Graph(format!("duplicate edge {a}-{b}")));
            }
            idx_edges.push(key);
        }
        let components = connected_components(areas.len(), &idx_edges);
        let laplacian = laplacian(areas.len(), &idx_edges);
        let scaled = scale_structure(&laplacian, &components)?;
        Ok(Self {
            areas,
            edges: idx_edges,
            components,
            scaled,
        })
    }

    /// Reads a CSV edge list with columns `area_a,area_b`. A row with an
    /// empty `area_b` declares an area without neighbours. Areas are sorted.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, SpatialError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| SpatialError::Graph(format!("missing column `{name}`")))
        };
        let (ca, cb) = (col("area_a")?, col("area_b")?);
        let mut areas = BTreeSet::new();
        let mut edges = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let a = rec.get(ca).unwrap_or("");
            let b = rec.get(cb).unwrap_or("");
            if a.is_empty() {
                continue;
            }
            let a: Id = a.into();
            areas.insert(a.clone());
            if !b.is_empty() {
                let b: Id = b.into();
                areas.insert(b.clone());
                edges.push((a, b));
            }
        }
        Self::new(areas.into_iter().collect(), &edges)
    }

    pub fn load(path: &Path) -> Result<Self, SpatialError> {
        let f = std::fs::File::open(path).map_err(|e| SpatialError::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv(f)
    }

    pub fn areas(&self) -> &[Id] {
        &self.areas
    }

    pub fn n_areas(&self) -> usize {
        self.areas.len()
    }

    pub fn area_index(&self, area: &str) -> Option<usize> {
        self.areas.iter().position(|a| a.as_ref() == area)
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    pub fn is_connected(&self) -> bool {
        self.components.len() == 1
    }

    /// Areas without neighbours.
    pub fn islands(&self) -> Vec<usize> {
        self.components.iter().filter(|c| c.len() == 1).map(|c| c[0]).collect()
    }

    /// Unscaled ICAR structure (graph Laplacian).
    pub fn icar_structure(&self) -> DMatrix<f64> {
        laplacian(self.areas.len(), &self.edges)
    }

    pub fn scaled_icar(&self) -> &ScaledStructure {
        &self.scaled
    }

    /// Per-component factor multiplying the Laplacian (islands get 1).
    pub fn scaling_factors(&self) -> &[f64] {
        &self.scaled.factors
    }
}

pub(crate) fn laplacian(n: usize, edges: &[(usize, usize)]) -> DMatrix<f64> {
    let mut q = DMatrix::<f64>::zeros(n, n);
    for &(i, j) in edges {
        q[(i, i)] += 1.0;
        q[(j, j)] += 1.0;
        q[(i, j)] -= 1.0;
        q[(j, i)] -= 1.0;
    }
    q
}

fn connected_components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(i, j) in edges {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<Id> {
        v.iter().map(|&s| s.into()).collect()
    }

    #[test]
    fn path_graph_laplacian() {
        let g = SpatialGraph::new(ids(&["a", "b"]), &[("a".into(), "b".into())]).unwrap();
        assert_eq!(
            g.icar_structure(),
            DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])
        );
        assert!(g.is_connected());
    }

    #[test]
    fn csv_with_island_and_components() {
        let text = "area_a,area_b\na,b\nb,c\nd,e\nz,\n";
        let g = SpatialGraph::from_csv(text.as_bytes()).unwrap();
        assert_eq!(g.n_areas(), 6);
        assert_eq!(g.components().len(), 3);
        assert_eq!(g.islands(), vec![5]);
    }

    #[test]
    fn rejects_self_loop_duplicates_and_empty() {
        assert!(SpatialGraph::from_csv("area_a,area_b\na,a\n".as_bytes()).is_err());
        assert!(SpatialGraph::from_csv("area_a,area_b\na,b\nb,a\n".as_bytes()).is_err());
        assert!(matches!(
            SpatialGraph::from_csv("area_a,area_b\n".as_bytes()),
            Err(SpatialError::EmptyGraph)
        ));
    }
}
