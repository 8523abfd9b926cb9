//! Nonlinear steady-state solvers.
//!
//! The default path marches the parabolic flow semi-implicitly (the
//! transport operator and the lagged reaction potential are implicit, so
//! each step is one sparse solve) and hands over to damped Newton once the
//! residual is small. The parabolic flow is globally attracted to the
//! unique positive steady state, so the marching phase is robust from
//! rough initial data, while Newton finishes quadratically.
//!
//! [`monotone_iterate`] is the alternative route used to cross-check the
//! solution against an ordered pair of discrete lower/upper solutions.

use crate::error::{Error, Result};
use crate::expr::ResourceFunction;
use crate::field::ScalarField;
use crate::flux::{assemble, FluxKind, FluxScheme};
use crate::grid::Grid;
use crate::sparse::{linear_solve_from, SparseOperator};
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverKind {
    /// Semi-implicit pseudo-time marching, then Newton. The default.
    Marching,
    /// Damped Newton from the initial guess only.
    Newton,
    /// Reserved for [`monotone_iterate`]; `solve_single` rejects it.
    Monotone,
}

/// One single-species problem instance.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub m: ResourceFunction,
    pub grid: Grid,
    pub d: f64,
    pub alpha: f64,
    pub solver: SolverKind,
    pub tol_residual: f64,
    pub max_steps: usize,
    pub dt0: f64,
}

impl ProblemSpec {
    pub fn new(m: ResourceFunction, grid: Grid, d: f64, alpha: f64) -> Result<Self> {
        if !(d > 0.0) {
            return Err(Error::Precondition(format!("d must be positive, got {d}")));
        }
        if !(alpha >= 0.0) {
            return Err(Error::Precondition(format!("alpha must be >= 0, got {alpha}")));
        }
        Ok(Self {
            m,
            grid,
            d,
            alpha,
            solver: SolverKind::Marching,
            tol_residual: 1e-10,
            max_steps: 50_000,
            dt0: 1e-3,
        })
    }

    pub fn with_solver(mut self, solver: SolverKind) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol_residual = tol;
        self
    }

    pub fn scheme(&self) -> FluxScheme {
        FluxScheme { kind: FluxKind::ExponentialFitting, d: self.d, alpha: self.alpha }
    }

    /// Transport operator `div(d grad . - alpha . grad m)` on the grid.
    pub fn transport(&self) -> SparseOperator {
        let zero = ScalarField::constant(&self.grid, 0.0);
        assemble(&self.scheme(), &self.m, &self.grid, &zero)
    }

    /// Peak widths scale like `sqrt(d/alpha)`; refuse alpha beyond what the
    /// grid resolves with three cells per width.
    pub fn check_resolution(&self) -> Result<()> {
        let max_alpha = self.grid.max_resolvable_alpha(self.d);
        if self.alpha > max_alpha {
            return Err(Error::ResolutionGate(format!(
                "alpha = {} exceeds the resolvable range of grid {} at d = {} \
                 (max admissible alpha = {:.6})",
                self.alpha,
                self.grid.id(),
                self.d,
                max_alpha
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SteadyOutcome {
    /// Positive steady state found.
    Converged,
    /// The flow collapsed below the extinction floor everywhere; reported
    /// as an outcome, not an error, since small alpha with sign-changing m
    /// can legitimately drive the population extinct.
    Extinct,
}

pub const EXTINCTION_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct SteadyStateResult {
    pub u: ScalarField,
    pub residual_sup: f64,
    pub iterations: usize,
    pub wall_time_ms: f64,
    pub positivity_min: f64,
    pub outcome: SteadyOutcome,
}

/// Sup norm of the discrete steady operator applied to `u`.
pub fn residual_sup(transport: &SparseOperator, m: &ScalarField, u: &ScalarField) -> f64 {
    let tu = transport.matvec(u.values());
    let mut worst = 0.0f64;
    for i in 0..u.len() {
        let r = tu[i] + u.get(i) * (m.get(i) - u.get(i));
        worst = worst.max(r.abs());
    }
    worst
}

fn residual_vec(transport: &SparseOperator, m: &ScalarField, u: &[f64]) -> Vec<f64> {
    let mut r = transport.matvec(u);
    for i in 0..u.len() {
        r[i] += u[i] * (m.get(i) - u[i]);
    }
    r
}

const DT_MIN: f64 = 1e-4;
const DT_MAX: f64 = 1e3;
const NEWTON_SWITCH: f64 = 1e-3;

/// Solve for the unique positive steady state of the given instance.
///
/// Initial guess `max(m, 0.1 max m)`: positive, and close enough to the
/// attractor that the marching phase never wanders.
pub fn solve_single(spec: &ProblemSpec) -> Result<SteadyStateResult> {
    let m_field = ScalarField::sample(&spec.m, &spec.grid);
    if m_field.max() <= 0.0 {
        return Err(Error::Precondition(
            "m must be positive somewhere (H1) for a positive steady state".into(),
        ));
    }
    let init = default_initial_guess(&m_field);
    match spec.solver {
        SolverKind::Marching => solve_from(spec, init),
        SolverKind::Newton => {
            let start = Instant::now();
            let transport = spec.transport();
            let mut u = init.values().to_vec();
            let (iters, res) = newton_phase(spec, &transport, &m_field, &mut u, spec.max_steps)?;
            finish(spec, &m_field, u, iters, res, start)
        }
        SolverKind::Monotone => Err(Error::Precondition(
            "solver kind `monotone` is driven through monotone_iterate with a barrier pair".into(),
        )),
    }
}

/// Solve starting from a caller-supplied positive initial field. Used by
/// the uniqueness cross-check.
pub fn solve_from(spec: &ProblemSpec, init: ScalarField) -> Result<SteadyStateResult> {
    let start = Instant::now();
    let m_field = ScalarField::sample(&spec.m, &spec.grid);
    let transport = spec.transport();
    let mut u = init.values().to_vec();
    let n = u.len();

    let mut dt = spec.dt0;
    let mut res = residual_sup(&transport, &m_field, &init);
    let mut iters = 0usize;
    let mut since_improvement = 0usize;
    let mut best_res = res;

    while iters < spec.max_steps {
        if res <= spec.tol_residual {
            return finish(spec, &m_field, u, iters, res, start);
        }
        if res < NEWTON_SWITCH {
            let (extra, final_res) =
                newton_phase(spec, &transport, &m_field, &mut u, spec.max_steps - iters)?;
            return finish(spec, &m_field, u, iters + extra, final_res, start);
        }

        // implicit step: (I/dt - T - diag(m - u^n)) u^{n+1} = u^n / dt
        let shift: Vec<f64> = (0..n).map(|i| 1.0 / dt - (m_field.get(i) - u[i])).collect();
        let system = transport.scaled(-1.0).with_diagonal_shift(&shift);
        let rhs: Vec<f64> = u.iter().map(|v| v / dt).collect();
        let lin_tol = (res * 1e-6).clamp(1e-14, 1e-8);
        let next = match linear_solve_from(&system, &rhs, Some(&u), lin_tol, 20_000) {
            Ok(x) => x,
            Err(_) if dt > DT_MIN => {
                dt = (dt * 0.25).max(DT_MIN);
                iters += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        iters += 1;

        // never clip negatives; retry with a smaller step instead
        if next.iter().any(|&v| v < 0.0) {
            if dt <= DT_MIN + f64::EPSILON {
                return Err(Error::Stagnation(format!(
                    "negative density at dt = {dt:.3e}; instance may be unresolvable"
                )));
            }
            dt = (dt * 0.5).max(DT_MIN);
            continue;
        }

        let next_field = ScalarField::new(spec.grid.clone(), next.clone())?;
        let new_res = residual_sup(&transport, &m_field, &next_field);
        if new_res.is_finite() && new_res <= res {
            dt = (dt * 1.5).min(DT_MAX);
            u = next;
            res = new_res;
        } else if dt > DT_MIN {
            dt = (dt * 0.5).max(DT_MIN);
        } else {
            // accept uphill moves at the floor step; the flow is still
            // contracting in the large
            u = next;
            res = new_res;
        }

        // extinction detection: everything below the floor and still sinking
        if u.iter().all(|&v| v < EXTINCTION_FLOOR) {
            return finish(spec, &m_field, u, iters, res, start);
        }

        if res < best_res * (1.0 - 1e-12) {
            best_res = res;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement > 2000 {
                return Err(Error::Stagnation(format!(
                    "marching stalled at residual {res:.3e} after {iters} steps (dt = {dt:.3e})"
                )));
            }
        }
    }
    Err(Error::Stagnation(format!(
        "no convergence within {} steps (residual {res:.3e})",
        spec.max_steps
    )))
}

fn default_initial_guess(m_field: &ScalarField) -> ScalarField {
    let floor = 0.1 * m_field.max();
    m_field.map(|v| v.max(floor))
}

/// Damped Newton on `F(u) = T u + u (m - u)`. The Jacobian is
/// `T + diag(m - 2u)`; near the steady state its spectrum is strictly
/// negative, so `-J` is the matrix actually solved.
fn newton_phase(
    spec: &ProblemSpec,
    transport: &SparseOperator,
    m_field: &ScalarField,
    u: &mut Vec<f64>,
    max_steps: usize,
) -> Result<(usize, f64)> {
    let n = u.len();
    let mut res_vec = residual_vec(transport, m_field, u);
    let mut res = res_vec.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for it in 0..max_steps {
        if res <= spec.tol_residual {
            return Ok((it, res));
        }
        // -J = -T - diag(m - 2u)
        let shift: Vec<f64> = (0..n).map(|i| -(m_field.get(i) - 2.0 * u[i])).collect();
        let neg_j = transport.scaled(-1.0).with_diagonal_shift(&shift);
        let lin_tol = (res * 1e-8).clamp(1e-15, 1e-10);
        let delta = linear_solve_from(&neg_j, &res_vec, None, lin_tol, 50_000)?;

        let mut lambda = 1.0f64;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = (0..n).map(|i| u[i] + lambda * delta[i]).collect();
            if trial.iter().all(|&v| v >= 0.0) {
                let trial_res_vec = residual_vec(transport, m_field, &trial);
                let trial_res = trial_res_vec.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if trial_res < res {
                    *u = trial;
                    res_vec = trial_res_vec;
                    res = trial_res;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::Stagnation(format!(
                "Newton line search failed at residual {res:.3e}"
            )));
        }
    }
    if res <= spec.tol_residual {
        Ok((max_steps, res))
    } else {
        Err(Error::Stagnation(format!(
            "Newton did not reach tolerance: residual {res:.3e}"
        )))
    }
}

fn finish(
    spec: &ProblemSpec,
    m_field: &ScalarField,
    u: Vec<f64>,
    iterations: usize,
    residual: f64,
    start: Instant,
) -> Result<SteadyStateResult> {
    let u = ScalarField::new(spec.grid.clone(), u)?;
    u.check_finite("steady state")?;
    let positivity_min = u.min();
    let outcome = if u.max() < EXTINCTION_FLOOR {
        SteadyOutcome::Extinct
    } else {
        SteadyOutcome::Converged
    };
    let _ = m_field;
    Ok(SteadyStateResult {
        u,
        residual_sup: residual,
        iterations,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        positivity_min,
        outcome,
    })
}

/// Diffusion-only steady state `theta_d`: `d lap(theta) + theta (m - theta) = 0`
/// with Neumann boundary. Requires `int m > 0`, which is what guarantees
/// existence of the positive solution.
pub fn solve_theta(m: &ResourceFunction, grid: &Grid, d: f64) -> Result<SteadyStateResult> {
    let m_field = ScalarField::sample(m, grid);
    let mass = m_field.integrate();
    if mass <= 0.0 {
        return Err(Error::Precondition(format!(
            "theta_d requires int m > 0 for existence; got {mass:.6e}"
        )));
    }
    let spec = ProblemSpec::new(m.clone(), grid.clone(), d, 0.0)?;
    solve_single(&spec)
}

/// Monotone (Picard with shift) iteration between an ordered pair of
/// discrete lower/upper solutions, starting from the upper one:
///
/// ```text
/// (sigma I - T - diag(m)) u^{k+1} = sigma u^k - (u^k)^2,
/// sigma >= 2 max|m| + 2 max(upper).
/// ```
///
/// The shifted matrix is an M-matrix, so iterates decrease monotonically
/// from a discrete upper solution and stay above any discrete lower
/// solution; an ordering violation means the input pair was not a valid
/// barrier pair and is reported as such.
pub fn monotone_iterate(
    spec: &ProblemSpec,
    lower: &ScalarField,
    upper: &ScalarField,
) -> Result<SteadyStateResult> {
    let start = Instant::now();
    let n = spec.grid.cell_count();
    if lower.len() != n || upper.len() != n {
        return Err(Error::Precondition("barrier fields do not match the grid".into()));
    }
    let order_slack = 1e-12 * upper.max().max(1.0);
    for i in 0..n {
        if lower.get(i) > upper.get(i) + order_slack {
            return Err(Error::Precondition(format!(
                "lower > upper at cell {i}: {} > {}",
                lower.get(i),
                upper.get(i)
            )));
        }
    }

    let m_field = ScalarField::sample(&spec.m, &spec.grid);
    let transport = spec.transport();
    let max_abs_m = m_field.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let sigma = 2.0 * max_abs_m + 2.0 * upper.max();

    // sigma I - T - diag(m)
    let shift: Vec<f64> = (0..n).map(|i| sigma - m_field.get(i)).collect();
    let system = transport.scaled(-1.0).with_diagonal_shift(&shift);

    let mut u = upper.values().to_vec();
    let mut res = f64::INFINITY;
    for it in 0..spec.max_steps {
        let rhs: Vec<f64> = u.iter().map(|&v| sigma * v - v * v).collect();
        let next = linear_solve_from(&system, &rhs, Some(&u), 1e-13, 50_000)?;
        for i in 0..n {
            if next[i] > u[i] + order_slack {
                return Err(Error::BarrierOrdering { iterate: it, cell: i });
            }
            if next[i] < lower.get(i) - order_slack {
                return Err(Error::BarrierOrdering { iterate: it, cell: i });
            }
        }
        u = next;
        let u_field = ScalarField::new(spec.grid.clone(), u.clone())?;
        res = residual_sup(&transport, &m_field, &u_field);
        if res <= spec.tol_residual {
            return finish(spec, &m_field, u, it + 1, res, start);
        }
    }
    Err(Error::Stagnation(format!(
        "monotone iteration did not converge within {} iterates (residual {res:.3e})",
        spec.max_steps
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical_1d(alpha: f64, n: usize) -> ProblemSpec {
        let m = ResourceFunction::parse("sub(const 2, sq x)").unwrap();
        let g = Grid::line(-1.0, 1.0, n).unwrap();
        ProblemSpec::new(m, g, 1.0, alpha).unwrap()
    }

    #[test]
    fn constant_resource_gives_constant_state() {
        let m = ResourceFunction::parse("const 1").unwrap();
        let g = Grid::line(-1.0, 1.0, 64).unwrap();
        for alpha in [0.0, 100.0] {
            let spec = ProblemSpec::new(m.clone(), g.clone(), 1.0, alpha).unwrap();
            let r = solve_single(&spec).unwrap();
            assert_eq!(r.outcome, SteadyOutcome::Converged);
            for &v in r.u.values() {
                assert!((v - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn conservation_identity_at_convergence() {
        let m = ResourceFunction::parse("add(const 1.5, cos(mul(pi, x)))").unwrap();
        let g = Grid::line(-1.0, 1.0, 256).unwrap();
        let spec = ProblemSpec::new(m.clone(), g.clone(), 1.0, 0.0).unwrap();
        let r = solve_single(&spec).unwrap();
        let m_field = ScalarField::sample(&m, &g);
        let identity = r.u.zip_with(&m_field, |u, m| u * (m - u)).integrate();
        assert!(identity.abs() <= 10.0 * spec.tol_residual * g.domain_volume());
    }

    #[test]
    fn advection_pushes_peak_above_max_m() {
        let spec = canonical_1d(20.0, 512);
        let r = solve_single(&spec).unwrap();
        assert_eq!(r.outcome, SteadyOutcome::Converged);
        assert!(r.u.max() > 2.0, "max u = {}", r.u.max());
        assert!(r.positivity_min > 0.0);
    }

    #[test]
    fn unique_state_from_two_seeds() {
        let spec = canonical_1d(10.0, 256);
        let a = solve_single(&spec).unwrap();
        let other = ScalarField::constant(&spec.grid, 0.5);
        let b = solve_from(&spec, other).unwrap();
        assert!(a.u.sup_diff(&b.u) <= 10.0 * spec.tol_residual);
    }

    #[test]
    fn theta_matches_zero_advection_solve() {
        let m = ResourceFunction::parse("sub(const 2, sq x)").unwrap();
        let g = Grid::line(-1.0, 1.0, 256).unwrap();
        let theta = solve_theta(&m, &g, 0.5).unwrap();
        let spec = ProblemSpec::new(m, g, 0.5, 0.0).unwrap();
        let direct = solve_single(&spec).unwrap();
        assert!(theta.u.sup_diff(&direct.u) <= 10.0 * spec.tol_residual);
    }

    #[test]
    fn theta_requires_positive_mass() {
        let m = ResourceFunction::parse("sub(cos(mul(const 2, mul(pi, x))), const 0.5)").unwrap();
        let g = Grid::line(-1.0, 1.0, 64).unwrap();
        assert!(matches!(solve_theta(&m, &g, 0.1), Err(Error::Precondition(_))));
    }

    #[test]
    fn theta_bounded_by_max_m_for_sign_changing_m() {
        // maximum-principle oracle: theta stays within (0, max m]
        let m = ResourceFunction::parse("add(cos(mul(const 2, mul(pi, x))), const 0.3)").unwrap();
        let g = Grid::line(-1.0, 1.0, 256).unwrap();
        let m_field = ScalarField::sample(&m, &g);
        assert!(m_field.integrate() > 0.0);
        let r = solve_theta(&m, &g, 0.05).unwrap();
        assert!(r.positivity_min > 0.0);
        assert!(r.u.max() < m_field.max());
    }

    #[test]
    fn monotone_iteration_constant_case() {
        let m = ResourceFunction::parse("const 1").unwrap();
        let g = Grid::line(-1.0, 1.0, 64).unwrap();
        let spec = ProblemSpec::new(m, g.clone(), 1.0, 0.0).unwrap();
        let lower = ScalarField::constant(&g, 0.9);
        let upper = ScalarField::constant(&g, 1.3);
        let r = monotone_iterate(&spec, &lower, &upper).unwrap();
        for &v in r.u.values() {
            assert!((v - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn monotone_rejects_inverted_pair() {
        let m = ResourceFunction::parse("const 1").unwrap();
        let g = Grid::line(-1.0, 1.0, 64).unwrap();
        let spec = ProblemSpec::new(m, g.clone(), 1.0, 0.0).unwrap();
        let lower = ScalarField::constant(&g, 1.5);
        let upper = ScalarField::constant(&g, 1.0);
        assert!(monotone_iterate(&spec, &lower, &upper).is_err());
    }

    #[test]
    fn resolution_gate() {
        let spec = canonical_1d(1e6, 64);
        assert!(matches!(spec.check_resolution(), Err(Error::ResolutionGate(_))));
        let ok = canonical_1d(25.0, 4096);
        assert!(ok.check_resolution().is_ok());
    }
}
