//! Cluster-level grade counts: at-risk size and exits per (cohort, cluster, grade).

use std::collections::BTreeMap;

use crate::data::{Id, RiskRow};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct GradeCountCell {
    pub cohort: i32,
    pub cluster: Id,
    pub area: Id,
    pub urban: bool,
    pub grade: u32,
    /// Persons at risk of leaving during this grade.
    pub n: u32,
    /// Persons who left.
    pub y: u32,
}

/// Tallies risk rows into one cell per (cohort, cluster, grade), ordered by
/// that key.
pub fn build_cells(rows: &[RiskRow]) -> Vec<GradeCountCell> {
    let mut map: BTreeMap<(i32, &str, u32), (Id, Id, bool, u32, u32)> = BTreeMap::new();
    for r in rows {
        let e = map
            .entry((r.cohort, r.cluster_id.as_ref(), r.grade))
            .or_insert_with(|| (r.cluster_id.clone(), r.area_id.clone(), r.urban, 0, 0));
        e.3 += 1;
        e.4 += u32::from(r.event);
    }
    map.into_iter()
        .map(|((cohort, _, grade), (cluster, area, urban, n, y))| GradeCountCell {
            cohort,
            cluster,
            area,
            urban,
            grade,
            n,
            y,
        })
        .collect()
}

/// Number of grade intercepts the data can inform: one past the highest
/// grade anybody survived. Cells at or above it consist of exits only.
pub fn grades_needed(cells: &[GradeCountCell]) -> usize {
    cells
        .iter()
        .map(|c| c.grade as usize + usize::from(c.n > c.y))
        .max()
        .unwrap_or(0)
}
