//! Cell-centered structured grids on axis-aligned boxes in 1D and 2D.
//!
//! Cells are uniform per axis with centers `x_i = lo + (i + 1/2) h`. All
//! discrete operators in this crate live on cell centers; faces only carry
//! fluxes. Boundary faces carry zero flux, which realizes the no-flux
//! boundary condition exactly in the conservation sense.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A spatial point. In 1D the second coordinate is fixed at zero.
pub type Point = [f64; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.cells as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    axes: Vec<Axis>,
}

/// One boundary face of a boundary cell: the owning cell, the outward unit
/// normal and the face center.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryFace {
    pub cell: usize,
    pub normal: Point,
    pub center: Point,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::Config(format!(
                "grid dimension must be 1 or 2, got {}",
                axes.len()
            )));
        }
        for (k, ax) in axes.iter().enumerate() {
            if ax.cells < 4 {
                return Err(Error::Config(format!(
                    "axis {k}: need at least 4 cells, got {}",
                    ax.cells
                )));
            }
            if !(ax.hi - ax.lo).is_finite() || ax.hi <= ax.lo {
                return Err(Error::Config(format!(
                    "axis {k}: invalid extent [{}, {}]",
                    ax.lo, ax.hi
                )));
            }
        }
        Ok(Self { axes })
    }

    pub fn line(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        Self::new(vec![Axis { lo, hi, cells }])
    }

    pub fn rect(x: (f64, f64), y: (f64, f64), nx: usize, ny: usize) -> Result<Self> {
        Self::new(vec![
            Axis { lo: x.0, hi: x.1, cells: nx },
            Axis { lo: y.0, hi: y.1, cells: ny },
        ])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn cells(&self, k: usize) -> usize {
        self.axes[k].cells
    }

    pub fn spacing(&self, k: usize) -> f64 {
        self.axes[k].spacing()
    }

    pub fn max_spacing(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing()).fold(0.0, f64::max)
    }

    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|a| a.cells).product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing()).product()
    }

    pub fn domain_volume(&self) -> f64 {
        self.cell_count() as f64 * self.cell_volume()
    }

    /// Flat index from per-axis indices (x fastest).
    pub fn index(&self, i: usize, j: usize) -> usize {
        match self.dim() {
            1 => i,
            _ => i + self.axes[0].cells * j,
        }
    }

    pub fn multi_index(&self, idx: usize) -> (usize, usize) {
        match self.dim() {
            1 => (idx, 0),
            _ => (idx % self.axes[0].cells, idx / self.axes[0].cells),
        }
    }

    pub fn center(&self, idx: usize) -> Point {
        let (i, j) = self.multi_index(idx);
        let x = self.axes[0].lo + (i as f64 + 0.5) * self.axes[0].spacing();
        let y = if self.dim() == 2 {
            self.axes[1].lo + (j as f64 + 0.5) * self.axes[1].spacing()
        } else {
            0.0
        };
        [x, y]
    }

    /// Cell containing `p`, or `None` if outside the closed box.
    pub fn cell_containing(&self, p: Point) -> Option<usize> {
        let mut ij = [0usize; 2];
        for k in 0..self.dim() {
            let ax = &self.axes[k];
            if p[k] < ax.lo - 1e-12 * (ax.hi - ax.lo) || p[k] > ax.hi + 1e-12 * (ax.hi - ax.lo) {
                return None;
            }
            let t = ((p[k] - ax.lo) / ax.spacing()).floor();
            ij[k] = (t as isize).clamp(0, ax.cells as isize - 1) as usize;
        }
        Some(self.index(ij[0], ij[1]))
    }

    /// Neighbor of `idx` one cell along `axis` in direction `dir` (+1/-1).
    pub fn neighbor(&self, idx: usize, axis: usize, dir: i32) -> Option<usize> {
        let (i, j) = self.multi_index(idx);
        let mut ij = [i as isize, j as isize];
        ij[axis] += dir as isize;
        if ij[axis] < 0 || ij[axis] >= self.axes[axis].cells as isize {
            return None;
        }
        Some(self.index(ij[0] as usize, ij[1] as usize))
    }

    /// Face-adjacent neighbors as (axis, neighbor index).
    pub fn face_neighbors(&self, idx: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(2 * self.dim());
        for axis in 0..self.dim() {
            for dir in [-1i32, 1] {
                if let Some(n) = self.neighbor(idx, axis, dir) {
                    out.push((axis, n));
                }
            }
        }
        out
    }

    /// Area of a face orthogonal to `axis` (1 in 1D).
    pub fn face_area(&self, axis: usize) -> f64 {
        match self.dim() {
            1 => 1.0,
            _ => self.axes[1 - axis].spacing(),
        }
    }

    /// All boundary faces with outward normals and face centers.
    pub fn boundary_faces(&self) -> Vec<BoundaryFace> {
        let mut out = Vec::new();
        for idx in 0..self.cell_count() {
            let c = self.center(idx);
            for axis in 0..self.dim() {
                for dir in [-1i32, 1] {
                    if self.neighbor(idx, axis, dir).is_none() {
                        let mut normal = [0.0, 0.0];
                        normal[axis] = dir as f64;
                        let mut center = c;
                        center[axis] += dir as f64 * 0.5 * self.axes[axis].spacing();
                        out.push(BoundaryFace { cell: idx, normal, center });
                    }
                }
            }
        }
        out
    }

    pub fn is_boundary_cell(&self, idx: usize) -> bool {
        (0..self.dim()).any(|axis| {
            self.neighbor(idx, axis, -1).is_none() || self.neighbor(idx, axis, 1).is_none()
        })
    }

    /// Largest advection rate the grid resolves: peaks have width
    /// `sqrt(d/alpha)`, and we require `h <= sqrt(d/alpha)/3`.
    pub fn max_resolvable_alpha(&self, d: f64) -> f64 {
        let h = self.max_spacing();
        d / (9.0 * h * h)
    }

    /// Short identifier used in sweep records, e.g. `1d-4096` or `2d-256x256`.
    pub fn id(&self) -> String {
        match self.dim() {
            1 => format!("1d-{}", self.axes[0].cells),
            _ => format!("2d-{}x{}", self.axes[0].cells, self.axes[1].cells),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_is_sum_of_cells() {
        let g = Grid::line(-1.0, 1.0, 4096).unwrap();
        let total: f64 = (0..g.cell_count()).map(|_| g.cell_volume()).sum();
        assert_eq!(total, g.domain_volume());
        assert!((g.domain_volume() - 2.0).abs() < 1e-12);

        let g2 = Grid::rect((-1.0, 1.0), (-1.0, 1.0), 16, 8).unwrap();
        assert!((g2.domain_volume() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(Grid::line(0.0, 1.0, 3).is_err());
        assert!(Grid::line(1.0, 0.0, 8).is_err());
    }

    #[test]
    fn neighbors_and_boundary() {
        let g = Grid::rect((-1.0, 1.0), (-1.0, 1.0), 4, 4).unwrap();
        // corner cell has two neighbors, interior cell four
        assert_eq!(g.face_neighbors(0).len(), 2);
        assert_eq!(g.face_neighbors(g.index(1, 1)).len(), 4);
        // each side contributes `n` faces
        assert_eq!(g.boundary_faces().len(), 16);
        let g1 = Grid::line(0.0, 1.0, 8).unwrap();
        assert_eq!(g1.boundary_faces().len(), 2);
    }

    #[test]
    fn centers_and_lookup() {
        let g = Grid::line(-1.0, 1.0, 4).unwrap();
        assert_eq!(g.center(0)[0], -0.75);
        assert_eq!(g.center(3)[0], 0.75);
        assert_eq!(g.cell_containing([0.6, 0.0]), Some(3));
        assert_eq!(g.cell_containing([2.0, 0.0]), None);
    }
}
