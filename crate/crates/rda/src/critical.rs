//! Critical points of the resource function: detection, Newton refinement
//! and classification by Hessian eigenvalues.
//!
//! The classification feeds everything downstream: the set of positive
//! strict interior maxima is where the density concentrates, maxima at
//! value zero and negative critical values steer the barrier construction,
//! and minima/saddles are where the sign of the Laplacian is checked.

use crate::error::{Error, Result};
use crate::expr::ResourceFunction;
use crate::grid::{Grid, Point};
use serde::{Deserialize, Serialize};

/// Tolerance below which two maximum values are considered one class.
pub const VALUE_MERGE_TOL: f64 = 1e-9;

/// Default gradient tolerance after Newton refinement.
pub const DEFAULT_GRAD_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriticalKind {
    Max,
    Min,
    Saddle,
    Degenerate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: Point,
    pub value: f64,
    pub gradient_norm: f64,
    /// Hessian eigenvalues, one per grid dimension.
    pub hessian_eigenvalues: Vec<f64>,
    pub kind: CriticalKind,
    /// False when the point sits on the boundary of the box.
    pub interior: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CriticalPointSet {
    pub points: Vec<CriticalPoint>,
}

impl CriticalPointSet {
    pub fn empty() -> Self {
        Self { points: Vec::new() }
    }

    /// Positive strict interior maxima: the concentration set.
    pub fn positive_maxima(&self) -> Vec<&CriticalPoint> {
        self.points
            .iter()
            .filter(|p| p.kind == CriticalKind::Max && p.interior && p.value > VALUE_MERGE_TOL)
            .collect()
    }

    /// Strict maxima with value zero (within the merge tolerance).
    pub fn zero_maxima(&self) -> Vec<&CriticalPoint> {
        self.points
            .iter()
            .filter(|p| p.kind == CriticalKind::Max && p.value.abs() <= VALUE_MERGE_TOL)
            .collect()
    }

    /// Distinct values attained on the positive maxima, ascending. Values
    /// within `VALUE_MERGE_TOL` of each other form one class.
    pub fn distinct_max_values(&self) -> Vec<f64> {
        let mut vals: Vec<f64> = self.positive_maxima().iter().map(|p| p.value).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut out: Vec<f64> = Vec::new();
        for v in vals {
            match out.last() {
                Some(&last) if (v - last).abs() <= VALUE_MERGE_TOL => {}
                _ => out.push(v),
            }
        }
        out
    }

    /// The positive maxima whose value matches `value` within the merge
    /// tolerance.
    pub fn maxima_with_value(&self, value: f64) -> Vec<&CriticalPoint> {
        self.positive_maxima()
            .into_iter()
            .filter(|p| (p.value - value).abs() <= VALUE_MERGE_TOL)
            .collect()
    }

    /// Values of critical points (any kind) with strictly negative value.
    pub fn negative_critical_values(&self) -> Vec<f64> {
        self.points
            .iter()
            .filter(|p| p.value < -VALUE_MERGE_TOL)
            .map(|p| p.value)
            .collect()
    }

    pub fn has_degenerate(&self) -> bool {
        self.points.iter().any(|p| p.kind == CriticalKind::Degenerate)
    }
}

fn hessian_eigenvalues(h: [[f64; 2]; 2], dim: usize) -> Vec<f64> {
    if dim == 1 {
        vec![h[0][0]]
    } else {
        let tr2 = 0.5 * (h[0][0] + h[1][1]);
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        let disc = (tr2 * tr2 - det).max(0.0).sqrt();
        vec![tr2 - disc, tr2 + disc]
    }
}

fn classify(eigs: &[f64]) -> CriticalKind {
    let scale = eigs.iter().fold(1.0f64, |a, e| a.max(e.abs()));
    let tol = 1e-8 * scale;
    if eigs.iter().any(|e| e.abs() <= tol) {
        CriticalKind::Degenerate
    } else if eigs.iter().all(|&e| e < 0.0) {
        CriticalKind::Max
    } else if eigs.iter().all(|&e| e > 0.0) {
        CriticalKind::Min
    } else {
        CriticalKind::Saddle
    }
}

/// Damped Newton iteration on `grad m = 0` from `start`, clamped to the box.
/// Returns the refined location if the gradient norm drops below `tol`.
fn refine(m: &ResourceFunction, g: &Grid, start: Point, tol: f64) -> Option<Point> {
    let dim = g.dim();
    let clamp = |p: &mut Point| {
        for k in 0..dim {
            let ax = g.axis(k);
            p[k] = p[k].clamp(ax.lo, ax.hi);
        }
    };
    let gnorm = |p: Point| {
        let gr = m.gradient(p);
        (0..dim).map(|k| gr[k] * gr[k]).sum::<f64>().sqrt()
    };
    let mut p = start;
    clamp(&mut p);
    let mut best = gnorm(p);
    for _ in 0..60 {
        if best <= tol {
            return Some(p);
        }
        let jet = m.jet(p);
        let step = newton_step(jet.g, jet.h, dim)?;
        let mut lambda = 1.0;
        let mut advanced = false;
        for _ in 0..25 {
            let mut q = p;
            for k in 0..dim {
                q[k] += lambda * step[k];
            }
            clamp(&mut q);
            let n = gnorm(q);
            if n < best {
                p = q;
                best = n;
                advanced = true;
                break;
            }
            lambda *= 0.5;
        }
        if !advanced {
            break;
        }
    }
    (best <= tol).then_some(p)
}

/// Newton direction `-H^{-1} g`; falls back to steepest descent when the
/// Hessian is numerically singular.
fn newton_step(grad: [f64; 2], h: [[f64; 2]; 2], dim: usize) -> Option<[f64; 2]> {
    let scale = h
        .iter()
        .flatten()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(1e-30);
    if dim == 1 {
        if h[0][0].abs() <= 1e-14 * scale {
            return Some([-grad[0], 0.0]);
        }
        return Some([-grad[0] / h[0][0], 0.0]);
    }
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    if det.abs() <= 1e-14 * scale * scale {
        return Some([-grad[0], -grad[1]]);
    }
    Some([
        -(h[1][1] * grad[0] - h[0][1] * grad[1]) / det,
        -(-h[1][0] * grad[0] + h[0][0] * grad[1]) / det,
    ])
}

/// Locate and classify all critical points of `m` resolvable on `g`.
///
/// Seeds are grid cells where the gradient norm is a discrete local
/// minimum; each seed is refined by damped Newton, duplicates within one
/// cell diameter are merged, and surviving points are classified by the
/// Hessian eigenvalues. Degenerate Hessians are reported as such, never
/// dropped.
pub fn classify_critical_points(
    m: &ResourceFunction,
    g: &Grid,
    tol_grad: f64,
) -> Result<CriticalPointSet> {
    if tol_grad <= 0.0 {
        return Err(Error::Precondition("tol_grad must be positive".into()));
    }
    let dim = g.dim();
    let n = g.cell_count();
    let gnorm2: Vec<f64> = (0..n).map(|i| m.gradient_norm_sq(g.center(i))).collect();

    let mut seeds: Vec<usize> = Vec::new();
    for i in 0..n {
        let mine = gnorm2[i];
        if g.face_neighbors(i).iter().all(|&(_, nb)| mine <= gnorm2[nb]) {
            seeds.push(i);
        }
    }

    let cell_diameter = {
        let mut s = 0.0;
        for k in 0..dim {
            let h = g.spacing(k);
            s += h * h;
        }
        s.sqrt()
    };

    let mut found: Vec<Point> = Vec::new();
    for seed in seeds {
        if let Some(p) = refine(m, g, g.center(seed), tol_grad) {
            let dup = found.iter().any(|q| {
                let mut d2 = 0.0;
                for k in 0..dim {
                    d2 += (p[k] - q[k]) * (p[k] - q[k]);
                }
                d2.sqrt() <= cell_diameter
            });
            if !dup {
                found.push(p);
            }
        }
    }
    found.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let boundary_tol = 1e-9;
    let points = found
        .into_iter()
        .map(|p| {
            let jet = m.jet(p);
            let eigs = hessian_eigenvalues(jet.h, dim);
            let interior = (0..dim).all(|k| {
                let ax = g.axis(k);
                let span = ax.hi - ax.lo;
                p[k] > ax.lo + boundary_tol * span && p[k] < ax.hi - boundary_tol * span
            });
            CriticalPoint {
                location: p,
                value: jet.v,
                gradient_norm: (0..dim).map(|k| jet.g[k] * jet.g[k]).sum::<f64>().sqrt(),
                kind: classify(&eigs),
                hessian_eigenvalues: eigs,
                interior,
            }
        })
        .collect();

    Ok(CriticalPointSet { points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_parabola_peak() {
        let m = ResourceFunction::parse("sub(const 2, sq x)").unwrap();
        let g = Grid::line(-1.0, 1.0, 128).unwrap();
        let cps = classify_critical_points(&m, &g, DEFAULT_GRAD_TOL).unwrap();
        assert_eq!(cps.points.len(), 1);
        let p = &cps.points[0];
        assert!(p.location[0].abs() < 1e-10);
        assert!((p.value - 2.0).abs() < 1e-12);
        assert_eq!(p.kind, CriticalKind::Max);
        assert!((p.hessian_eigenvalues[0] + 2.0).abs() < 1e-12);
        assert!(p.interior);
    }

    #[test]
    fn separable_2d_peak() {
        let m = ResourceFunction::parse("sub(const 2, add(sq x, sq y))").unwrap();
        let g = Grid::rect((-1.0, 1.0), (-1.0, 1.0), 32, 32).unwrap();
        let cps = classify_critical_points(&m, &g, DEFAULT_GRAD_TOL).unwrap();
        assert_eq!(cps.points.len(), 1);
        let p = &cps.points[0];
        assert!(p.location[0].abs() < 1e-10 && p.location[1].abs() < 1e-10);
        assert_eq!(p.kind, CriticalKind::Max);
        let det: f64 = p.hessian_eigenvalues.iter().product();
        assert!((det - 4.0).abs() < 1e-10);
    }

    #[test]
    fn cosine_critical_points_match_dense_scan() {
        // oracle: dense scan of [-1,1] at 1e5 points, sign analysis of m'
        let m = ResourceFunction::parse("add(cos(mul(const 2, mul(pi, x))), const 0.5)").unwrap();
        let nscan = 100_000;
        let mut oracle_max = Vec::new();
        let mut oracle_min = Vec::new();
        let mut prev_d = m.gradient([-1.0 + 2e-5 * 0.5, 0.0])[0];
        for s in 1..nscan {
            let x = -1.0 + 2.0 * (s as f64 + 0.5) / nscan as f64;
            let d = m.gradient([x, 0.0])[0];
            if prev_d > 0.0 && d <= 0.0 {
                oracle_max.push(x);
            }
            if prev_d < 0.0 && d >= 0.0 {
                oracle_min.push(x);
            }
            prev_d = d;
        }
        // interior maxima at x=0, minima at +-1/2
        assert_eq!(oracle_max.len(), 1);
        assert_eq!(oracle_min.len(), 2);

        let g = Grid::line(-1.0, 1.0, 256).unwrap();
        let cps = classify_critical_points(&m, &g, DEFAULT_GRAD_TOL).unwrap();
        let interior_max: Vec<_> = cps
            .points
            .iter()
            .filter(|p| p.kind == CriticalKind::Max && p.interior)
            .collect();
        let interior_min: Vec<_> = cps
            .points
            .iter()
            .filter(|p| p.kind == CriticalKind::Min && p.interior)
            .collect();
        assert_eq!(interior_max.len(), 1);
        assert!(interior_max[0].location[0].abs() < 1e-8);
        assert_eq!(interior_min.len(), 2);
        for (p, ox) in interior_min.iter().zip(&oracle_min) {
            assert!((p.location[0] - ox).abs() < 1e-4);
        }
        // the endpoints are genuine critical points of the extension but
        // must be flagged as non-interior
        for p in cps.points.iter().filter(|p| !p.interior) {
            assert!((p.location[0].abs() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn stable_under_grid_refinement() {
        for src in [
            "sub(const 2, sq x)",
            "add(cos(mul(const 2, mul(pi, x))), const 0.5)",
        ] {
            let m = ResourceFunction::parse(src).unwrap();
            let coarse = classify_critical_points(&m, &Grid::line(-1.0, 1.0, 128).unwrap(), 1e-10)
                .unwrap();
            let fine = classify_critical_points(&m, &Grid::line(-1.0, 1.0, 256).unwrap(), 1e-10)
                .unwrap();
            assert_eq!(coarse.points.len(), fine.points.len());
            for (a, b) in coarse.points.iter().zip(&fine.points) {
                assert!((a.location[0] - b.location[0]).abs() < 1e-8);
            }
        }
        let m2 = ResourceFunction::parse("sub(const 2, add(sq x, sq y))").unwrap();
        let c = classify_critical_points(&m2, &Grid::rect((-1.0, 1.0), (-1.0, 1.0), 16, 16).unwrap(), 1e-10).unwrap();
        let f = classify_critical_points(&m2, &Grid::rect((-1.0, 1.0), (-1.0, 1.0), 32, 32).unwrap(), 1e-10).unwrap();
        assert_eq!(c.points.len(), f.points.len());
        for (a, b) in c.points.iter().zip(&f.points) {
            assert!((a.location[0] - b.location[0]).abs() < 1e-8);
            assert!((a.location[1] - b.location[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn value_classes_merge() {
        // two peaks of equal height, one lower peak
        let m = ResourceFunction::parse(
            "add(add(gauss1(-0.6, 0.15), gauss1(0.6, 0.15)), mul(const 0.5, gauss1(0.0, 0.1)))",
        )
        .unwrap();
        let g = Grid::line(-1.0, 1.0, 512).unwrap();
        let cps = classify_critical_points(&m, &g, 1e-10).unwrap();
        let vals = cps.distinct_max_values();
        assert_eq!(vals.len(), 2, "classes: {vals:?}");
        assert_eq!(cps.maxima_with_value(vals[1]).len(), 2);
        assert_eq!(cps.maxima_with_value(vals[0]).len(), 1);
    }
}
