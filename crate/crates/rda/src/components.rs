//! Connected components of superlevel sets `{x : m(x) > level}` on the
//! grid, with face-adjacency connectivity. The barrier construction
//! partitions the domain by these components.

use crate::critical::CriticalPointSet;
use crate::expr::ResourceFunction;
use crate::grid::Grid;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Component {
    /// Sorted cell indices.
    pub cells: Vec<usize>,
    /// Bounding box in cell indices, inclusive.
    pub bbox_lo: [usize; 2],
    pub bbox_hi: [usize; 2],
    /// Indices into the supplied `CriticalPointSet` of points lying inside.
    pub critical_points: Vec<usize>,
}

impl Component {
    pub fn contains_cell(&self, idx: usize) -> bool {
        self.cells.binary_search(&idx).is_ok()
    }
}

/// Flood-fill the superlevel set `{m(center) > level}` into connected
/// components. Components come out ordered by their smallest cell index;
/// an empty result is valid.
pub fn superlevel_components(
    m: &ResourceFunction,
    g: &Grid,
    level: f64,
    cps: &CriticalPointSet,
) -> Vec<Component> {
    let n = g.cell_count();
    let inside: Vec<bool> = (0..n).map(|i| m.value(g.center(i)) > level).collect();
    let mut comp_of: Vec<Option<usize>> = vec![None; n];
    let mut components: Vec<Vec<usize>> = Vec::new();

    for start in 0..n {
        if !inside[start] || comp_of[start].is_some() {
            continue;
        }
        let id = components.len();
        let mut cells = Vec::new();
        let mut queue = VecDeque::from([start]);
        comp_of[start] = Some(id);
        while let Some(c) = queue.pop_front() {
            cells.push(c);
            for (_, nb) in g.face_neighbors(c) {
                if inside[nb] && comp_of[nb].is_none() {
                    comp_of[nb] = Some(id);
                    queue.push_back(nb);
                }
            }
        }
        cells.sort_unstable();
        components.push(cells);
    }

    components
        .into_iter()
        .map(|cells| {
            let mut lo = [usize::MAX; 2];
            let mut hi = [0usize; 2];
            for &c in &cells {
                let (i, j) = g.multi_index(c);
                lo[0] = lo[0].min(i);
                lo[1] = lo[1].min(j);
                hi[0] = hi[0].max(i);
                hi[1] = hi[1].max(j);
            }
            let critical_points = cps
                .points
                .iter()
                .enumerate()
                .filter_map(|(k, p)| {
                    g.cell_containing(p.location)
                        .filter(|c| cells.binary_search(c).is_ok())
                        .map(|_| k)
                })
                .collect();
            Component { cells, bbox_lo: lo, bbox_hi: hi, critical_points }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical::{classify_critical_points, CriticalPointSet};

    #[test]
    fn parabola_superlevel_is_an_interval() {
        let m = ResourceFunction::parse("sub(const 2, sq x)").unwrap();
        let g = Grid::line(-1.0, 1.0, 1024).unwrap();
        let comps = superlevel_components(&m, &g, 1.0, &CriticalPointSet::empty());
        assert_eq!(comps.len(), 1);
        // component is approximately {|x| < 1/sqrt(2)}
        let half = 1.0 / 2.0f64.sqrt();
        for &c in &comps[0].cells {
            assert!(g.center(c)[0].abs() < half + g.spacing(0));
        }
        let count_expected = (2.0 * half / g.spacing(0)) as isize;
        assert!((comps[0].cells.len() as isize - count_expected).abs() <= 2);
    }

    #[test]
    fn cosine_superlevel_has_three_components() {
        // oracle: cos(2 pi x) > 0.5 iff x in [-1,-11/12) U (-1/12,1/12) U (11/12,1]
        let m = ResourceFunction::parse("cos(mul(const 2, mul(pi, x)))").unwrap();
        let g = Grid::line(-1.0, 1.0, 1024).unwrap();
        let comps = superlevel_components(&m, &g, 0.5, &CriticalPointSet::empty());
        assert_eq!(comps.len(), 3);
    }

    #[test]
    fn level_above_max_is_empty() {
        let m = ResourceFunction::parse("sub(const 2, sq x)").unwrap();
        let g = Grid::line(-1.0, 1.0, 64).unwrap();
        assert!(superlevel_components(&m, &g, 5.0, &CriticalPointSet::empty()).is_empty());
    }

    #[test]
    fn monotone_in_level() {
        let m = ResourceFunction::parse("cos(mul(const 2, mul(pi, x)))").unwrap();
        let g = Grid::line(-1.0, 1.0, 512).unwrap();
        let lo = superlevel_components(&m, &g, 0.2, &CriticalPointSet::empty());
        let hi = superlevel_components(&m, &g, 0.7, &CriticalPointSet::empty());
        for comp in &hi {
            // every higher-level component sits inside one lower-level component
            let parent = lo.iter().filter(|c| c.contains_cell(comp.cells[0])).count();
            assert_eq!(parent, 1);
            let parent = lo.iter().find(|c| c.contains_cell(comp.cells[0])).unwrap();
            assert!(comp.cells.iter().all(|&c| parent.contains_cell(c)));
        }
    }

    #[test]
    fn reports_contained_critical_points() {
        let m = ResourceFunction::parse("sub(const 2, sq x)").unwrap();
        let g = Grid::line(-1.0, 1.0, 256).unwrap();
        let cps = classify_critical_points(&m, &g, 1e-10).unwrap();
        let comps = superlevel_components(&m, &g, 1.5, &cps);
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].critical_points, vec![0]);
    }
}
