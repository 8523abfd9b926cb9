//! The two-species competition system: an advective species U against a
//! purely diffusive species V with the same growth rate and competition
//! strength,
//!
//! ```text
//! U_t = div(d1 grad U - alpha U grad m) + U (m - U - V),
//! V_t = d2 lap V + V (m - U - V),
//! ```
//!
//! with no-flux boundaries. At alpha = 0 and d1 > d2 the slower diffuser
//! excludes U and the flow ends at (0, theta_{d2}); for large alpha the
//! advective species carves out the peaks of m while V converges back to
//! theta_{d2}.

use crate::asymptotics::strictly_decreasing;
use crate::critical::CriticalPointSet;
use crate::error::{Error, Result};
use crate::expr::ResourceFunction;
use crate::field::ScalarField;
use crate::grid::{Grid, Point};
use crate::sparse::linear_solve_from;
use crate::steady::{
    solve_single, solve_theta, ProblemSpec, SteadyStateResult, EXTINCTION_FLOOR,
};
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Clone, Debug)]
pub struct CompetitionSpec {
    pub m: ResourceFunction,
    pub grid: Grid,
    pub d1: f64,
    pub d2: f64,
    pub alpha: f64,
    pub tol_residual: f64,
    pub max_steps: usize,
    pub dt0: f64,
}

impl CompetitionSpec {
    pub fn new(m: ResourceFunction, grid: Grid, d1: f64, d2: f64, alpha: f64) -> Result<Self> {
        if !(d1 > 0.0 && d2 > 0.0) {
            return Err(Error::Precondition(format!(
                "diffusion rates must be positive: d1 = {d1}, d2 = {d2}"
            )));
        }
        if !(alpha >= 0.0) {
            return Err(Error::Precondition(format!("alpha must be >= 0, got {alpha}")));
        }
        let mass = ScalarField::sample(&m, &grid).integrate();
        if mass <= 0.0 {
            return Err(Error::Precondition(format!(
                "competition spec requires int m > 0 (existence of theta_d2); got {mass:.6e}"
            )));
        }
        Ok(Self {
            m,
            grid,
            d1,
            d2,
            alpha,
            tol_residual: 1e-10,
            max_steps: 100_000,
            dt0: 1e-3,
        })
    }

    fn u_problem(&self) -> Result<ProblemSpec> {
        let mut spec = ProblemSpec::new(self.m.clone(), self.grid.clone(), self.d1, self.alpha)?;
        spec.tol_residual = self.tol_residual;
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompetitionOutcome {
    Coexistence,
    /// One species fell below the extinction floor everywhere.
    Exclusion { u_survives: bool },
}

#[derive(Clone, Debug)]
pub struct CompetitionResult {
    pub u: ScalarField,
    pub v: ScalarField,
    pub residual_u: f64,
    pub residual_v: f64,
    pub iterations: usize,
    pub wall_time_ms: f64,
    pub outcome: CompetitionOutcome,
    /// Single-species reference state at (d1, alpha): the upper bound for U.
    pub reference_u: SteadyStateResult,
    /// Diffusion-only reference state theta_{d2}: the upper bound for V.
    pub reference_theta: SteadyStateResult,
}

impl CompetitionResult {
    /// Worst sandwich-bound violations `(max(U - u), max(V - theta))`,
    /// nonpositive when the bounds hold.
    pub fn bound_violations(&self) -> (f64, f64) {
        let mut worst_u = f64::NEG_INFINITY;
        let mut worst_v = f64::NEG_INFINITY;
        for i in 0..self.u.len() {
            worst_u = worst_u.max(self.u.get(i) - self.reference_u.u.get(i));
            worst_v = worst_v.max(self.v.get(i) - self.reference_theta.u.get(i));
        }
        (worst_u, worst_v)
    }
}

/// March the coupled parabolic system to its steady state.
///
/// Each species is implicit in its own transport and in the lagged
/// reaction potential `m - U^n - V^n`; the cross terms are never split
/// between the species inconsistently, so the scheme preserves the
/// ordering structure. Initialized at `(u/2, theta/2)`, strictly inside
/// the sandwich bounds.
pub fn solve_competition(spec: &CompetitionSpec) -> Result<CompetitionResult> {
    let start = Instant::now();
    let g = &spec.grid;
    let n = g.cell_count();
    let m_field = ScalarField::sample(&spec.m, g);

    let u_spec = spec.u_problem()?;
    let reference_u = solve_single(&u_spec)?;
    let reference_theta = solve_theta(&spec.m, g, spec.d2)?;

    let transport_u = u_spec.transport();
    let theta_spec = ProblemSpec::new(spec.m.clone(), g.clone(), spec.d2, 0.0)?;
    let transport_v = theta_spec.transport();

    let mut u: Vec<f64> = reference_u.u.values().iter().map(|v| 0.5 * v).collect();
    let mut v: Vec<f64> = reference_theta.u.values().iter().map(|v| 0.5 * v).collect();

    let res_pair = |u: &[f64], v: &[f64]| -> (f64, f64) {
        let tu = transport_u.matvec(u);
        let tv = transport_v.matvec(v);
        let mut ru = 0.0f64;
        let mut rv = 0.0f64;
        for i in 0..n {
            let pot = m_field.get(i) - u[i] - v[i];
            ru = ru.max((tu[i] + u[i] * pot).abs());
            rv = rv.max((tv[i] + v[i] * pot).abs());
        }
        (ru, rv)
    };

    let mut dt = spec.dt0;
    let (mut ru, mut rv) = res_pair(&u, &v);
    let mut iters = 0usize;
    let mut best = ru.max(rv);
    let mut since_improvement = 0usize;

    const DT_MIN: f64 = 1e-4;
    const DT_MAX: f64 = 1e3;

    while iters < spec.max_steps {
        if ru <= spec.tol_residual && rv <= spec.tol_residual {
            break;
        }
        let pot: Vec<f64> = (0..n).map(|i| m_field.get(i) - u[i] - v[i]).collect();
        let shift_u: Vec<f64> = (0..n).map(|i| 1.0 / dt - pot[i]).collect();
        let shift_v = shift_u.clone();
        let sys_u = transport_u.scaled(-1.0).with_diagonal_shift(&shift_u);
        let sys_v = transport_v.scaled(-1.0).with_diagonal_shift(&shift_v);
        let rhs_u: Vec<f64> = u.iter().map(|x| x / dt).collect();
        let rhs_v: Vec<f64> = v.iter().map(|x| x / dt).collect();
        let lin_tol = (ru.max(rv) * 1e-6).clamp(1e-14, 1e-8);
        let nu = linear_solve_from(&sys_u, &rhs_u, Some(&u), lin_tol, 20_000);
        let nv = linear_solve_from(&sys_v, &rhs_v, Some(&v), lin_tol, 20_000);
        iters += 1;
        let (nu, nv) = match (nu, nv) {
            (Ok(a), Ok(b)) => (a, b),
            _ if dt > DT_MIN => {
                dt = (dt * 0.25).max(DT_MIN);
                continue;
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        if nu.iter().chain(nv.iter()).any(|&x| x < 0.0) {
            if dt <= DT_MIN + f64::EPSILON {
                return Err(Error::Stagnation(
                    "negative density in the coupled march at the floor step".into(),
                ));
            }
            dt = (dt * 0.5).max(DT_MIN);
            continue;
        }
        let (nru, nrv) = res_pair(&nu, &nv);
        let new_worst = nru.max(nrv);
        if new_worst.is_finite() && new_worst <= ru.max(rv) {
            dt = (dt * 1.5).min(DT_MAX);
            u = nu;
            v = nv;
            ru = nru;
            rv = nrv;
        } else if dt > DT_MIN {
            dt = (dt * 0.5).max(DT_MIN);
        } else {
            u = nu;
            v = nv;
            ru = nru;
            rv = nrv;
        }

        if ru.max(rv) < best * (1.0 - 1e-12) {
            best = ru.max(rv);
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement > 5000 {
                return Err(Error::Stagnation(format!(
                    "coupled march stalled at residuals ({ru:.3e}, {rv:.3e}) after {iters} steps"
                )));
            }
        }
    }
    if ru > spec.tol_residual || rv > spec.tol_residual {
        return Err(Error::Stagnation(format!(
            "coupled march: no convergence within {} steps (residuals {ru:.3e}, {rv:.3e})",
            spec.max_steps
        )));
    }

    let u = ScalarField::new(g.clone(), u)?;
    let v = ScalarField::new(g.clone(), v)?;
    u.check_finite("competition U")?;
    v.check_finite("competition V")?;
    let u_dead = u.max() < EXTINCTION_FLOOR;
    let v_dead = v.max() < EXTINCTION_FLOOR;
    let outcome = if u_dead || v_dead {
        CompetitionOutcome::Exclusion { u_survives: !u_dead }
    } else {
        CompetitionOutcome::Coexistence
    };
    Ok(CompetitionResult {
        u,
        v,
        residual_u: ru,
        residual_v: rv,
        iterations: iters,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        outcome,
        reference_u,
        reference_theta,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum CheckStatus {
    Pass,
    Fail,
    Vacuous,
    Recorded,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompetitionVerdict {
    /// (a) per-peak deficit `m(x0) - theta(x0) - sup_B U`, per alpha; the
    /// trend must head to <= 0 wherever `m(x0) > theta(x0)`.
    pub deficit_by_alpha: Vec<Vec<f64>>,
    pub deficit_status: CheckStatus,
    /// (b) `sup|V - theta|` and the sup of the centered-gradient
    /// difference, per alpha; both decreasing.
    pub v_c0_errors: Vec<f64>,
    pub v_c1_errors: Vec<f64>,
    pub v_convergence_status: CheckStatus,
    /// (c) sup over each peak neighborhood of
    /// `|U - 2^{N/2}(m1 - theta(x0)) e^{alpha (m - m1)/d1}|`, per alpha.
    pub profile_errors: Vec<Vec<f64>>,
    pub profile_status: CheckStatus,
}

/// Centered-difference gradient sup distance between two fields.
fn gradient_sup_diff(a: &ScalarField, b: &ScalarField) -> f64 {
    let g = a.grid();
    let mut worst = 0.0f64;
    for i in 0..g.cell_count() {
        for axis in 0..g.dim() {
            if let (Some(lo), Some(hi)) = (g.neighbor(i, axis, -1), g.neighbor(i, axis, 1)) {
                let h = g.spacing(axis);
                let da = (a.get(hi) - a.get(lo)) / (2.0 * h);
                let db = (b.get(hi) - b.get(lo)) / (2.0 * h);
                worst = worst.max((da - db).abs());
            }
        }
    }
    worst
}

/// Evaluate the three coexistence trend checks over an alpha sweep of
/// converged results (all with the same spec apart from alpha, ascending).
pub fn verify_main4(
    results: &[(f64, CompetitionResult)],
    m: &ResourceFunction,
    d1: f64,
    cps: &CriticalPointSet,
    ball_radius: f64,
) -> Result<CompetitionVerdict> {
    if results.is_empty() {
        return Err(Error::Precondition("no results to verify".into()));
    }
    let theta = &results.last().unwrap().1.reference_theta.u;
    let peaks: Vec<(Point, f64)> = cps
        .positive_maxima()
        .iter()
        .map(|p| (p.location, p.value))
        .collect();
    if peaks.is_empty() {
        return Err(Error::Precondition("no positive maxima".into()));
    }
    let g = theta.grid().clone();

    // (a) concentration deficit against m - theta
    let mut deficit_by_alpha = Vec::new();
    let mut any_usable_peak = false;
    for (_, r) in results {
        let mut per_peak = Vec::new();
        for (loc, m_val) in &peaks {
            let target = m_val - theta.interpolate(*loc);
            let mut sup = f64::NEG_INFINITY;
            for i in 0..g.cell_count() {
                let c = g.center(i);
                let dx = c[0] - loc[0];
                let dy = if g.dim() == 2 { c[1] - loc[1] } else { 0.0 };
                if dx * dx + dy * dy <= ball_radius * ball_radius {
                    sup = sup.max(r.u.get(i));
                }
            }
            per_peak.push(target - sup);
        }
        deficit_by_alpha.push(per_peak);
    }
    let mut deficit_ok = true;
    for (pk, (loc, m_val)) in peaks.iter().enumerate() {
        let target = m_val - theta.interpolate(*loc);
        if target <= 0.0 {
            continue; // statement is vacuous at this peak
        }
        any_usable_peak = true;
        let series: Vec<f64> = deficit_by_alpha.iter().map(|row| row[pk]).collect();
        let last = *series.last().unwrap();
        let first = series[0];
        if !(last <= 0.05 * target || last < first) {
            deficit_ok = false;
        }
    }
    let deficit_status = if !any_usable_peak {
        CheckStatus::Vacuous
    } else if deficit_ok {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };

    // (b) V convergence to theta in C0 and discrete C1
    let v_c0_errors: Vec<f64> = results.iter().map(|(_, r)| r.v.sup_diff(theta)).collect();
    let v_c1_errors: Vec<f64> = results
        .iter()
        .map(|(_, r)| gradient_sup_diff(&r.v, theta))
        .collect();
    let v_ok = strictly_decreasing(&v_c0_errors) && strictly_decreasing(&v_c1_errors);
    let v_convergence_status = if v_ok { CheckStatus::Pass } else { CheckStatus::Fail };

    // (c) U profile over each peak neighborhood O_i (half distance to the
    // nearest other maximum, capped by the boundary)
    let values = cps.distinct_max_values();
    let (profile_errors, profile_status) = if values.len() != 1 {
        (Vec::new(), CheckStatus::Vacuous)
    } else {
        let m1 = values[0];
        let dimf = 2f64.powf(g.dim() as f64 / 2.0);
        let mut errors: Vec<Vec<f64>> = Vec::new();
        for (alpha, r) in results {
            let mut per_peak = Vec::new();
            for (loc, _) in &peaks {
                let mut o_radius = f64::INFINITY;
                for (other, _) in &peaks {
                    let dx = other[0] - loc[0];
                    let dy = other[1] - loc[1];
                    let dist = (dx * dx + dy * dy).sqrt();
                    if dist > 1e-9 {
                        o_radius = o_radius.min(0.5 * dist);
                    }
                }
                for k in 0..g.dim() {
                    let ax = g.axis(k);
                    o_radius = o_radius.min((loc[k] - ax.lo).abs().min((ax.hi - loc[k]).abs()));
                }
                let amp = dimf * (m1 - theta.interpolate(*loc));
                let mut sup = 0.0f64;
                for i in 0..g.cell_count() {
                    let c = g.center(i);
                    let dx = c[0] - loc[0];
                    let dy = if g.dim() == 2 { c[1] - loc[1] } else { 0.0 };
                    if dx * dx + dy * dy <= o_radius * o_radius {
                        let pred = amp * (alpha * (m.value(c) - m1) / d1).exp();
                        sup = sup.max((r.u.get(i) - pred).abs());
                    }
                }
                per_peak.push(sup);
            }
            errors.push(per_peak);
        }
        // decreasing per peak across the sweep
        let n_peaks = peaks.len();
        let ok = (0..n_peaks).all(|pk| {
            let series: Vec<f64> = errors.iter().map(|row| row[pk]).collect();
            strictly_decreasing(&series)
        });
        (errors, if ok { CheckStatus::Pass } else { CheckStatus::Fail })
    };

    Ok(CompetitionVerdict {
        deficit_by_alpha,
        deficit_status,
        v_c0_errors,
        v_c1_errors,
        v_convergence_status,
        profile_errors,
        profile_status,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThetaLimitVerdict {
    pub d_values: Vec<f64>,
    pub sup_errors: Vec<f64>,
    pub sup_errors_decreasing: bool,
    /// `m(x0) - theta_d(x0)` at the global maxima for the smallest d;
    /// asserted positive.
    pub global_peak_gaps: Vec<f64>,
    /// The same gaps at non-global maxima: recorded only, the sign can go
    /// either way away from the global maximum.
    pub other_peak_gaps: Vec<f64>,
}

/// Sweep `theta_d` over a decreasing list of d values and verify the
/// uniform convergence to `m^+ = max(m, 0)`.
pub fn theta_limit_checks(
    m: &ResourceFunction,
    g: &Grid,
    d_values: &[f64],
    cps: &CriticalPointSet,
) -> Result<ThetaLimitVerdict> {
    if d_values.len() < 4 || !d_values.windows(2).all(|w| w[1] < w[0]) {
        return Err(Error::Precondition(
            "theta limit check needs a decreasing list of at least 4 diffusion values".into(),
        ));
    }
    let m_plus = ScalarField::from_fn(g, |p| m.value(p).max(0.0));
    let mut sup_errors = Vec::new();
    let mut smallest: Option<SteadyStateResult> = None;
    for &d in d_values {
        let theta = solve_theta(m, g, d)?;
        sup_errors.push(theta.u.sup_diff(&m_plus));
        smallest = Some(theta);
    }
    let theta_small = smallest.unwrap();

    let maxima = cps.positive_maxima();
    let global_value = cps
        .distinct_max_values()
        .last()
        .copied()
        .ok_or_else(|| Error::Precondition("no positive maxima".into()))?;
    let mut global_peak_gaps = Vec::new();
    let mut other_peak_gaps = Vec::new();
    for p in maxima {
        let gap = p.value - theta_small.u.interpolate(p.location);
        if (p.value - global_value).abs() <= 1e-9 {
            global_peak_gaps.push(gap);
        } else {
            other_peak_gaps.push(gap);
        }
    }

    Ok(ThetaLimitVerdict {
        d_values: d_values.to_vec(),
        sup_errors_decreasing: strictly_decreasing(&sup_errors),
        sup_errors,
        global_peak_gaps,
        other_peak_gaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical::classify_critical_points;

    fn canonical(alpha: f64, d1: f64, d2: f64, n: usize) -> CompetitionSpec {
        let m = ResourceFunction::parse("sub(const 2, sq x)").unwrap();
        let g = Grid::line(-1.0, 1.0, n).unwrap();
        CompetitionSpec::new(m, g, d1, d2, alpha).unwrap()
    }

    #[test]
    fn rejects_nonpositive_mass() {
        let m = ResourceFunction::parse("sub(cos(mul(const 2, mul(pi, x))), const 0.5)").unwrap();
        let g = Grid::line(-1.0, 1.0, 64).unwrap();
        assert!(CompetitionSpec::new(m, g, 1.0, 0.5, 10.0).is_err());
    }

    #[test]
    fn zero_advection_slower_diffuser_wins() {
        let mut spec = canonical(0.0, 1.0, 0.5, 256);
        spec.tol_residual = 1e-11;
        let r = solve_competition(&spec).unwrap();
        assert!(r.u.max() <= 1e-6, "sup U = {:.3e}", r.u.max());
        assert!(r.v.sup_diff(&r.reference_theta.u) <= 1e-6);
        assert!(matches!(r.outcome, CompetitionOutcome::Exclusion { u_survives: false }));
    }

    #[test]
    fn large_advection_coexistence_with_sandwich_bounds() {
        let spec = canonical(100.0, 1.0, 0.5, 1024);
        let r = solve_competition(&spec).unwrap();
        assert_eq!(r.outcome, CompetitionOutcome::Coexistence);
        let scale = r.reference_u.u.max().max(r.reference_theta.u.max());
        let (wu, wv) = r.bound_violations();
        assert!(wu <= 1e-6 * scale, "U bound violation {wu:.3e}");
        assert!(wv <= 1e-6 * scale, "V bound violation {wv:.3e}");
        assert!(r.u.min() > 0.0 && r.v.min() > 0.0);
        // U concentrates at the peak
        let g = &spec.grid;
        let peak_cell = (0..g.cell_count())
            .max_by(|&a, &b| r.u.get(a).partial_cmp(&r.u.get(b)).unwrap())
            .unwrap();
        assert!(g.center(peak_cell)[0].abs() < 0.1);
    }

    #[test]
    fn species_integral_identities() {
        let spec = canonical(50.0, 1.0, 0.5, 512);
        let r = solve_competition(&spec).unwrap();
        let m_field = ScalarField::sample(&spec.m, &spec.grid);
        let pot = |i: usize| m_field.get(i) - r.u.get(i) - r.v.get(i);
        let mut int_u = 0.0;
        let mut int_v = 0.0;
        for i in 0..spec.grid.cell_count() {
            int_u += r.u.get(i) * pot(i);
            int_v += r.v.get(i) * pot(i);
        }
        let vol = spec.grid.cell_volume();
        let bound = 10.0 * spec.tol_residual * spec.grid.domain_volume();
        assert!((int_u * vol).abs() <= bound);
        assert!((int_v * vol).abs() <= bound);
    }

    #[test]
    fn theta_limit_sweep() {
        let m = ResourceFunction::parse("sub(const 2, sq x)").unwrap();
        let g = Grid::line(-1.0, 1.0, 1024).unwrap();
        let cps = classify_critical_points(&m, &g, 1e-10).unwrap();
        let v = theta_limit_checks(&m, &g, &[0.2, 0.1, 0.05, 0.025], &cps).unwrap();
        assert!(v.sup_errors_decreasing, "{:?}", v.sup_errors);
        assert_eq!(v.global_peak_gaps.len(), 1);
        assert!(v.global_peak_gaps[0] > 0.0);
        // constant m: theta = m exactly, gap zero
        let mc = ResourceFunction::parse("const 1").unwrap();
        let gc = Grid::line(-1.0, 1.0, 64).unwrap();
        let theta = solve_theta(&mc, &gc, 0.1).unwrap();
        assert!(theta.u.sup_diff(&ScalarField::constant(&gc, 1.0)) < 1e-9);
    }
}
