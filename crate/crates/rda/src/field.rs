//! Grid-sampled scalar fields (population densities, eigenfunctions,
//! barriers evaluated on cells).

use crate::error::{Error, Result};
use crate::expr::ResourceFunction;
use crate::grid::{Grid, Point};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::Config(format!(
                "field length {} does not match cell count {}",
                values.len(),
                grid.cell_count()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self { grid: grid.clone(), values: vec![c; grid.cell_count()] }
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(Point) -> f64) -> Self {
        let values = (0..grid.cell_count()).map(|i| f(grid.center(i))).collect();
        Self { grid: grid.clone(), values }
    }

    /// Sample an analytic function at cell centers.
    pub fn sample(m: &ResourceFunction, grid: &Grid) -> Self {
        Self::from_fn(grid, |p| m.value(p))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Midpoint quadrature: sum of value times cell volume. Exact for
    /// cellwise-constant fields.
    pub fn integrate(&self) -> f64 {
        let vol = self.grid.cell_volume();
        self.values.iter().sum::<f64>() * vol
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn sup_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |a, (x, y)| a.max((x - y).abs()))
    }

    /// Multilinear interpolation at an arbitrary point of the closed box.
    /// Clamps to the cell-center hull near the boundary.
    pub fn interpolate(&self, p: Point) -> f64 {
        let g = &self.grid;
        let mut i0 = [0usize; 2];
        let mut t = [0.0f64; 2];
        for k in 0..g.dim() {
            let ax = g.axis(k);
            let h = ax.spacing();
            let s = (p[k] - ax.lo) / h - 0.5;
            let base = s.floor();
            let bi = (base as isize).clamp(0, ax.cells as isize - 2) as usize;
            i0[k] = bi;
            t[k] = (s - bi as f64).clamp(0.0, 1.0);
        }
        match g.dim() {
            1 => {
                let a = self.values[i0[0]];
                let b = self.values[i0[0] + 1];
                a + t[0] * (b - a)
            }
            _ => {
                let v00 = self.values[g.index(i0[0], i0[1])];
                let v10 = self.values[g.index(i0[0] + 1, i0[1])];
                let v01 = self.values[g.index(i0[0], i0[1] + 1)];
                let v11 = self.values[g.index(i0[0] + 1, i0[1] + 1)];
                let a = v00 + t[0] * (v10 - v00);
                let b = v01 + t[0] * (v11 - v01);
                a + t[1] * (b - a)
            }
        }
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "{what}: value {v} at cell {i} ({:?})",
                    self.grid.center(i)
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integral_of_constants() {
        let g1 = Grid::line(-1.0, 1.0, 64).unwrap();
        assert!((ScalarField::constant(&g1, 1.0).integrate() - 2.0).abs() < 1e-14);
        let g2 = Grid::rect((-1.0, 1.0), (-1.0, 1.0), 32, 32).unwrap();
        assert!((ScalarField::constant(&g2, 1.0).integrate() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn odd_function_integrates_to_zero() {
        let g = Grid::line(-1.0, 1.0, 128).unwrap();
        let f = ScalarField::from_fn(&g, |p| p[0]);
        assert!(f.integrate().abs() < 1e-13);
    }

    #[test]
    fn interpolation_reproduces_linear_fields() {
        let g = Grid::rect((0.0, 1.0), (0.0, 2.0), 16, 8).unwrap();
        let f = ScalarField::from_fn(&g, |p| 3.0 * p[0] - 0.5 * p[1] + 1.0);
        for &(x, y) in &[(0.31, 0.77), (0.5, 1.0), (0.93, 1.9)] {
            let exact = 3.0 * x - 0.5 * y + 1.0;
            assert!((f.interpolate([x, y]) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn finite_check_catches_nan() {
        let g = Grid::line(0.0, 1.0, 8).unwrap();
        let mut f = ScalarField::constant(&g, 1.0);
        f.values_mut()[3] = f64::NAN;
        assert!(f.check_finite("test").is_err());
    }
}
