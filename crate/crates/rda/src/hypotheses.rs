//! Structural hypotheses on the resource function, checked on the grid.
//!
//! The unprimed hypotheses:
//!
//! - H1: m is smooth and positive somewhere (smoothness holds by
//!   construction of the expression grammar).
//! - H2: the outward normal derivative of m is nonpositive on the boundary.
//! - H3: finitely many local maximum points, all strict (nondegenerate)
//!   and interior.
//! - H4: the Laplacian of m is positive at every local minimum and saddle.
//!
//! The primed variants relax H2-H4 to the region `{m >= -delta}`.

use crate::critical::{classify_critical_points, CriticalKind, CriticalPointSet, DEFAULT_GRAD_TOL};
use crate::error::Result;
use crate::expr::ResourceFunction;
use crate::field::ScalarField;
use crate::grid::{Grid, Point};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HypothesisStatus {
    Holds,
    Fails,
    /// The unprimed hypothesis fails but the delta-restricted variant holds.
    HoldsWithDelta,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesisWitness {
    pub hypothesis: String,
    pub location: Point,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub h1: HypothesisStatus,
    pub h2: HypothesisStatus,
    pub h3: HypothesisStatus,
    pub h4: HypothesisStatus,
    pub h2_primed: HypothesisStatus,
    pub h3_primed: HypothesisStatus,
    pub h4_primed: HypothesisStatus,
    pub delta: f64,
    pub witnesses: Vec<HypothesisWitness>,
}

impl HypothesisReport {
    pub fn unprimed_hold(&self) -> bool {
        [self.h1, self.h2, self.h3, self.h4]
            .iter()
            .all(|s| *s == HypothesisStatus::Holds)
    }
}

const NORMAL_DERIV_TOL: f64 = 1e-10;

/// Boundary samples ordered along the boundary (the perimeter ring in 2D).
/// Each entry is (face center, outward normal derivative of m, m value).
fn boundary_samples(m: &ResourceFunction, g: &Grid) -> Vec<(Point, f64, f64)> {
    let sample = |p: Point, normal: Point| {
        let grad = m.gradient(p);
        (p, grad[0] * normal[0] + grad[1] * normal[1], m.value(p))
    };
    match g.dim() {
        1 => {
            let ax = g.axis(0);
            vec![
                sample([ax.lo, 0.0], [-1.0, 0.0]),
                sample([ax.hi, 0.0], [1.0, 0.0]),
            ]
        }
        _ => {
            let (ax, ay) = (g.axis(0), g.axis(1));
            let (hx, hy) = (ax.spacing(), ay.spacing());
            let mut out = Vec::new();
            // walk the perimeter counter-clockwise: bottom, right, top, left
            for i in 0..ax.cells {
                let x = ax.lo + (i as f64 + 0.5) * hx;
                out.push(sample([x, ay.lo], [0.0, -1.0]));
            }
            for j in 0..ay.cells {
                let y = ay.lo + (j as f64 + 0.5) * hy;
                out.push(sample([ax.hi, y], [1.0, 0.0]));
            }
            for i in (0..ax.cells).rev() {
                let x = ax.lo + (i as f64 + 0.5) * hx;
                out.push(sample([x, ay.hi], [0.0, 1.0]));
            }
            for j in (0..ay.cells).rev() {
                let y = ay.lo + (j as f64 + 0.5) * hy;
                out.push(sample([ax.lo, y], [-1.0, 0.0]));
            }
            out
        }
    }
}

struct SubChecks {
    h2: HypothesisStatus,
    h3: HypothesisStatus,
    h4: HypothesisStatus,
}

/// Evaluate H2-H4 restricted to `{m >= -delta}` (delta = 0 gives the
/// unprimed hypotheses).
fn check_restricted(
    m: &ResourceFunction,
    g: &Grid,
    cps: &CriticalPointSet,
    boundary: &[(Point, f64, f64)],
    delta: f64,
    tag: &str,
    witnesses: &mut Vec<HypothesisWitness>,
) -> SubChecks {
    let relevant = |value: f64| value >= -delta - 1e-14;

    let mut h2 = HypothesisStatus::Holds;
    for &(p, dn, val) in boundary {
        if relevant(val) && dn > NORMAL_DERIV_TOL {
            h2 = HypothesisStatus::Fails;
            witnesses.push(HypothesisWitness {
                hypothesis: format!("H2{tag}"),
                location: p,
                detail: format!("outward normal derivative {dn:.3e} > 0"),
            });
            break;
        }
    }

    // H3 part 1: every relevant interior maximum must be nondegenerate
    let mut h3 = HypothesisStatus::Holds;
    for p in &cps.points {
        if !relevant(p.value) {
            continue;
        }
        if p.kind == CriticalKind::Degenerate {
            h3 = HypothesisStatus::Fails;
            witnesses.push(HypothesisWitness {
                hypothesis: format!("H3{tag}"),
                location: p.location,
                detail: "degenerate critical point (non-strict maximum possible)".into(),
            });
        } else if p.kind == CriticalKind::Max && !p.interior {
            h3 = HypothesisStatus::Fails;
            witnesses.push(HypothesisWitness {
                hypothesis: format!("H3{tag}"),
                location: p.location,
                detail: "local maximum on the boundary".into(),
            });
        }
    }
    // H3 part 2: no boundary local maxima where m increases outward. A
    // boundary sample is a candidate when the outward derivative is
    // positive and its m value is a local max along the boundary ring.
    let nb = boundary.len();
    for (s, &(p, dn, val)) in boundary.iter().enumerate() {
        if !relevant(val) || dn <= NORMAL_DERIV_TOL {
            continue;
        }
        let is_ring_max = if nb <= 2 {
            true // 1D: isolated endpoints
        } else {
            let prev = boundary[(s + nb - 1) % nb].2;
            let next = boundary[(s + 1) % nb].2;
            val >= prev - 1e-14 && val >= next - 1e-14
        };
        if is_ring_max {
            h3 = HypothesisStatus::Fails;
            witnesses.push(HypothesisWitness {
                hypothesis: format!("H3{tag}"),
                location: p,
                detail: format!(
                    "boundary local maximum (outward derivative {dn:.3e} > 0)"
                ),
            });
            break;
        }
    }
    let _ = g;

    let mut h4 = HypothesisStatus::Holds;
    for p in &cps.points {
        if !relevant(p.value) {
            continue;
        }
        if matches!(p.kind, CriticalKind::Min | CriticalKind::Saddle) {
            let lap = m.laplacian(p.location);
            if lap <= 0.0 {
                h4 = HypothesisStatus::Fails;
                witnesses.push(HypothesisWitness {
                    hypothesis: format!("H4{tag}"),
                    location: p.location,
                    detail: format!("laplacian {lap:.3e} <= 0 at a {:?}", p.kind),
                });
            }
        }
    }

    SubChecks { h2, h3, h4 }
}

/// Check H1-H4 and their delta-restricted variants. `delta = 0` makes the
/// primed flags coincide with the unprimed ones. Failures never error;
/// they are recorded in the report with witnessing points.
pub fn check_hypotheses(m: &ResourceFunction, g: &Grid, delta: f64) -> Result<HypothesisReport> {
    let cps = classify_critical_points(m, g, DEFAULT_GRAD_TOL)?;
    check_hypotheses_with(m, g, &cps, delta)
}

/// Same as [`check_hypotheses`] but reuses an existing critical-point set.
pub fn check_hypotheses_with(
    m: &ResourceFunction,
    g: &Grid,
    cps: &CriticalPointSet,
    delta: f64,
) -> Result<HypothesisReport> {
    let mut witnesses = Vec::new();

    let max_m = ScalarField::sample(m, g).max();
    let h1 = if max_m > 0.0 {
        HypothesisStatus::Holds
    } else {
        witnesses.push(HypothesisWitness {
            hypothesis: "H1".into(),
            location: [0.0, 0.0],
            detail: format!("max m = {max_m:.3e} is not positive anywhere on the grid"),
        });
        HypothesisStatus::Fails
    };

    let boundary = boundary_samples(m, g);
    let unprimed = check_restricted(m, g, cps, &boundary, 0.0, "", &mut witnesses);
    let primed = if delta > 0.0 {
        check_restricted(m, g, cps, &boundary, delta, "'", &mut witnesses)
    } else {
        SubChecks { h2: unprimed.h2, h3: unprimed.h3, h4: unprimed.h4 }
    };

    let promote = |un: HypothesisStatus, pr: HypothesisStatus| {
        if pr == HypothesisStatus::Holds && un == HypothesisStatus::Fails && delta > 0.0 {
            HypothesisStatus::HoldsWithDelta
        } else {
            pr
        }
    };

    Ok(HypothesisReport {
        h1,
        h2: unprimed.h2,
        h3: unprimed.h3,
        h4: unprimed.h4,
        h2_primed: promote(unprimed.h2, primed.h2),
        h3_primed: promote(unprimed.h3, primed.h3),
        h4_primed: promote(unprimed.h4, primed.h4),
        delta,
        witnesses,
    })
}
