//! Sweep orchestration: solve every requested instance in dependency
//! order, derive the per-alpha scalars, evaluate the trend checks, and
//! persist CSV tables, plot data, verdicts and a resumability manifest.

use crate::asymptotics::{
    self, check_pointwise_lower_bound, concentration_deficit, decay_probes, envelope_constant,
    fit_decay_rate, mass_and_identity, profile_error, rescaled_profile, strictly_decreasing,
    BoundCheck, SweepRecord,
};
use crate::barrier::{build_upper_solution, interface_inequalities, verify_barrier, PieceKind};
use crate::competition::{
    solve_competition, theta_limit_checks, CompetitionOutcome, CompetitionSpec, ThetaLimitVerdict,
};
use crate::critical::{classify_critical_points, CriticalPointSet, DEFAULT_GRAD_TOL};
use crate::error::{Error, Result};
use crate::expr::ResourceFunction;
use crate::field::ScalarField;
use crate::grid::Grid;
use crate::harness::config::ExperimentConfig;
use crate::harness::verdict::{VerdictBlock, VerdictFile, VerdictStatus};
use crate::hypotheses::{check_hypotheses_with, HypothesisStatus};
use crate::spectral::{principal_eig, rayleigh_quotient};
use crate::steady::{solve_single, ProblemSpec, SteadyOutcome};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BarrierRow {
    pub c: f64,
    pub alpha: f64,
    pub eps: Vec<f64>,
    pub max_l_upper: f64,
    pub min_upper_minus_u: f64,
    pub min_interface_margin: f64,
    pub interface_max_jump: f64,
    pub max_u: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointwiseRow {
    pub alpha: f64,
    pub applicable: bool,
    pub holds: bool,
    pub min_margin: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompetitionRow {
    pub alpha: f64,
    pub coexistence: bool,
    pub max_u: f64,
    pub u_at_global_peak: f64,
    pub predicted_peak: f64,
    pub v_c0_error: f64,
    pub v_c1_error: f64,
    pub u_bound_violation: f64,
    pub v_bound_violation: f64,
    pub identity_u: f64,
    pub identity_v: f64,
    /// Per-peak deficit `m(x0) - theta(x0) - sup_B U`.
    pub deficits: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExclusionRow {
    pub sup_u: f64,
    pub v_gap_to_theta: f64,
}

/// Everything derived from one single-species solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlphaResult {
    pub record: SweepRecord,
    pub deficits: Vec<f64>,
    pub gaussian_sup_err: f64,
    pub center_ratio: f64,
    pub pointwise: PointwiseRow,
    pub barrier_rows: Vec<BarrierRow>,
    /// Worst (most negative) margin `R(psi) - lambda0` over the random
    /// test fields.
    pub rq_min_margin: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Manifest {
    /// Alpha (display form) -> completed single-species results.
    pub alpha_results: BTreeMap<String, AlphaResult>,
    pub competition_rows: BTreeMap<String, CompetitionRow>,
    pub exclusion: Option<ExclusionRow>,
    pub theta_limits: Option<ThetaLimitVerdict>,
}

pub struct RunSummary {
    pub out_dir: PathBuf,
    pub verdicts: VerdictFile,
}

fn alpha_key(alpha: f64) -> String {
    format!("{alpha}")
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Run the full experiment described by `cfg`. Completed (alpha, check)
/// pairs found in the manifest are skipped; artifacts are kept on failure
/// so a rerun resumes where it stopped.
pub fn run(cfg: &ExperimentConfig, workers: usize, only: Option<&str>) -> Result<RunSummary> {
    let out_dir = cfg.output_dir();
    std::fs::create_dir_all(&out_dir)?;
    let manifest_path = out_dir.join("manifest.json");
    let mut manifest: Manifest = match std::fs::read_to_string(&manifest_path) {
        Ok(text) => serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("corrupt manifest: {e}")))?,
        Err(_) => Manifest::default(),
    };

    let m = cfg.resource()?;
    let g = cfg.grid()?;
    let cps = classify_critical_points(&m, &g, DEFAULT_GRAD_TOL)?;
    let hyp = check_hypotheses_with(&m, &g, &cps, 0.0)?;

    let checks: Vec<String> = match only {
        Some(name) => vec![name.to_string()],
        None => cfg.checks.run.clone(),
    };
    let wants = |name: &str| checks.iter().any(|c| c == name);

    // structural gate: the barrier and profile checks assume the
    // hypotheses; refuse early with a clear message instead of failing
    // somewhere inside the construction
    if (wants("barrier") || wants("profile") || wants("decay-rate")) && !hyp.unprimed_hold() {
        return Err(Error::Precondition(format!(
            "requested checks need the structural hypotheses, but they fail: {:?}",
            hyp.witnesses
                .iter()
                .map(|w| w.hypothesis.clone())
                .collect::<Vec<_>>()
        )));
    }

    let needs_sweep = checks.iter().any(|c| c != "theta-limit" && c != "competition" && c != "hypotheses");

    // single-species sweep, parallel over alpha
    if needs_sweep {
        let todo: Vec<f64> = cfg
            .sweep
            .alphas
            .iter()
            .copied()
            .filter(|a| !manifest.alpha_results.contains_key(&alpha_key(*a)))
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        let results: Vec<(f64, Result<(AlphaResult, ScalarField)>)> = pool.install(|| {
            use rayon::prelude::*;
            todo.par_iter()
                .map(|&alpha| (alpha, run_alpha(cfg, &m, &g, &cps, alpha)))
                .collect()
        });
        for (alpha, res) in results {
            match res {
                Ok((ar, u)) => {
                    write_profile_csv(&out_dir, cfg, &m, &g, &cps, alpha, &u)?;
                    manifest.alpha_results.insert(alpha_key(alpha), ar);
                }
                Err(e) => {
                    // keep partial progress on disk before surfacing
                    write_atomic(&manifest_path, &serde_json::to_string_pretty(&manifest).unwrap())?;
                    return Err(e);
                }
            }
        }
        write_atomic(&manifest_path, &serde_json::to_string_pretty(&manifest).unwrap())?;
        write_sweep_csv(&out_dir, cfg, &manifest)?;
    }

    // theta limit sweep
    if wants("theta-limit") {
        if let Some(theta_cfg) = &cfg.theta {
            if manifest.theta_limits.is_none() {
                let verdict = theta_limit_checks(&m, &g, &theta_cfg.d_values, &cps)?;
                manifest.theta_limits = Some(verdict);
                write_atomic(&manifest_path, &serde_json::to_string_pretty(&manifest).unwrap())?;
            }
        }
    }

    // competition sweep
    if wants("competition") {
        if let Some(comp_cfg) = cfg.competition.clone() {
            if comp_cfg.include_exclusion_case && manifest.exclusion.is_none() {
                let mut spec =
                    CompetitionSpec::new(m.clone(), g.clone(), comp_cfg.d1, comp_cfg.d2, 0.0)?;
                spec.tol_residual = cfg.tolerances.tol_residual;
                let r = solve_competition(&spec)?;
                manifest.exclusion = Some(ExclusionRow {
                    sup_u: r.u.max(),
                    v_gap_to_theta: r.v.sup_diff(&r.reference_theta.u),
                });
                write_atomic(&manifest_path, &serde_json::to_string_pretty(&manifest).unwrap())?;
            }
            for &alpha in &comp_cfg.alphas {
                let key = alpha_key(alpha);
                if manifest.competition_rows.contains_key(&key) {
                    continue;
                }
                let row = run_competition_alpha(cfg, &m, &g, &cps, &comp_cfg, alpha)?;
                manifest.competition_rows.insert(key, row);
                write_atomic(&manifest_path, &serde_json::to_string_pretty(&manifest).unwrap())?;
            }
            write_competition_csv(&out_dir, &manifest)?;
        }
    }

    // verdicts from the collected data
    let verdicts = build_verdicts(cfg, &m, &g, &cps, &hyp, &manifest, &checks)?;
    let file = VerdictFile {
        config_echo: toml::to_string(cfg).unwrap_or_default(),
        verdicts,
    };
    write_atomic(
        &out_dir.join("verdicts.json"),
        &serde_json::to_string_pretty(&file).unwrap(),
    )?;

    Ok(RunSummary { out_dir, verdicts: file })
}

/// Solve one single-species instance and derive every per-alpha scalar.
fn run_alpha(
    cfg: &ExperimentConfig,
    m: &ResourceFunction,
    g: &Grid,
    cps: &CriticalPointSet,
    alpha: f64,
) -> Result<(AlphaResult, ScalarField)> {
    let mut spec = ProblemSpec::new(m.clone(), g.clone(), cfg.problem.d, alpha)?;
    spec.tol_residual = cfg.tolerances.tol_residual;
    spec.max_steps = cfg.tolerances.max_steps;
    spec.check_resolution()?;

    let sol = solve_single(&spec)?;
    if sol.outcome == SteadyOutcome::Extinct {
        return Err(Error::Precondition(format!(
            "alpha = {alpha}: the flow went extinct; sweep checks assume a positive state"
        )));
    }
    let u = sol.u.clone();

    let eig = principal_eig(&u, &spec)?;

    // random positive test fields: the variational principle must hold
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ alpha.to_bits());
    let mut rq_min_margin = f64::INFINITY;
    for _ in 0..50 {
        let test = ScalarField::from_fn(g, |_| rng.gen_range(0.1..1.1));
        let q = rayleigh_quotient(&test, &u, &spec)?;
        rq_min_margin = rq_min_margin.min(q - eig.lambda0);
    }

    let (mass, identity) = mass_and_identity(&u, m, g);
    let maxima = cps.positive_maxima();
    let u_at_peaks: Vec<f64> = maxima.iter().map(|p| u.interpolate(p.location)).collect();

    let values = cps.distinct_max_values();
    let m1_top = *values.last().ok_or_else(|| {
        Error::Precondition("sweep checks need at least one positive maximum".into())
    })?;
    let profile_sup_err = if values.len() == 1 {
        Some(profile_error(&u, &spec, cps)?.1)
    } else {
        None
    };
    let envelope_c = envelope_constant(&u, &spec, m1_top);

    let c_min = cfg
        .barrier
        .c_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let probes = decay_probes(m, g, cps, c_min)?;
    let probe_log_u: Vec<f64> = probes.iter().map(|p| u.interpolate(*p).ln()).collect();

    let deficits = concentration_deficit(&u, cps, cfg.barrier.ball_radius)
        .into_iter()
        .map(|(_, d)| d)
        .collect();

    // rescaled Gaussian around the global peak
    let global_peak = maxima
        .iter()
        .find(|p| (p.value - m1_top).abs() <= 1e-9)
        .unwrap()
        .location;
    let rp = rescaled_profile(&u, &spec, cps, global_peak, 2.0)?;

    let pointwise = match check_pointwise_lower_bound(&u, &spec) {
        BoundCheck::Checked { holds, min_margin } => PointwiseRow {
            alpha,
            applicable: true,
            holds,
            min_margin,
        },
        BoundCheck::Skipped { .. } => PointwiseRow {
            alpha,
            applicable: false,
            holds: false,
            min_margin: f64::NEG_INFINITY,
        },
    };

    let mut barrier_rows = Vec::new();
    for &c in &cfg.barrier.c_values {
        let upper = build_upper_solution(m, g, cps, c, alpha, spec.d)?;
        let report = verify_barrier(&upper, &u, &spec)?;
        let margins = interface_inequalities(&upper);
        let min_margin = margins
            .iter()
            .map(|ic| ic.margin)
            .fold(f64::INFINITY, f64::min);
        let eps = upper
            .pieces
            .iter()
            .filter_map(|p| match p.kind {
                PieceKind::Peak { eps, .. } => Some(eps),
                _ => None,
            })
            .collect();
        barrier_rows.push(BarrierRow {
            c,
            alpha,
            eps,
            max_l_upper: report.max_l_upper,
            min_upper_minus_u: report.min_upper_minus_u,
            min_interface_margin: min_margin,
            interface_max_jump: report.interface_max_jump,
            max_u: u.max(),
        });
    }

    let record = SweepRecord {
        alpha,
        d: spec.d,
        grid_id: g.id(),
        max_u: u.max(),
        u_at_peaks,
        mass,
        identity_residual: identity,
        profile_sup_err,
        envelope_c,
        probe_log_u,
        lambda0: eig.lambda0,
    };
    record.check_finite()?;

    Ok((
        AlphaResult {
            record,
            deficits,
            gaussian_sup_err: rp.gaussian_sup_err,
            center_ratio: rp.center_ratio,
            pointwise,
            barrier_rows,
            rq_min_margin,
        },
        u,
    ))
}

fn run_competition_alpha(
    cfg: &ExperimentConfig,
    m: &ResourceFunction,
    g: &Grid,
    cps: &CriticalPointSet,
    comp_cfg: &crate::harness::config::CompetitionSection,
    alpha: f64,
) -> Result<CompetitionRow> {
    let mut spec = CompetitionSpec::new(m.clone(), g.clone(), comp_cfg.d1, comp_cfg.d2, alpha)?;
    spec.tol_residual = cfg.tolerances.tol_residual;
    let r = solve_competition(&spec)?;
    let theta = &r.reference_theta.u;

    let values = cps.distinct_max_values();
    let m1 = *values.last().unwrap();
    let maxima = cps.positive_maxima();
    let global_peak = maxima
        .iter()
        .find(|p| (p.value - m1).abs() <= 1e-9)
        .unwrap()
        .location;
    let dimf = 2f64.powf(g.dim() as f64 / 2.0);
    let predicted_peak = dimf * (m1 - theta.interpolate(global_peak));

    let mut deficits = Vec::new();
    for p in &maxima {
        let target = p.value - theta.interpolate(p.location);
        let mut sup = f64::NEG_INFINITY;
        for i in 0..g.cell_count() {
            let c = g.center(i);
            let dx = c[0] - p.location[0];
            let dy = if g.dim() == 2 { c[1] - p.location[1] } else { 0.0 };
            if dx * dx + dy * dy <= cfg.barrier.ball_radius * cfg.barrier.ball_radius {
                sup = sup.max(r.u.get(i));
            }
        }
        deficits.push(target - sup);
    }

    let m_field = ScalarField::sample(m, g);
    let vol = g.cell_volume();
    let mut identity_u = 0.0;
    let mut identity_v = 0.0;
    for i in 0..g.cell_count() {
        let pot = m_field.get(i) - r.u.get(i) - r.v.get(i);
        identity_u += r.u.get(i) * pot * vol;
        identity_v += r.v.get(i) * pot * vol;
    }

    // discrete C1 distance between V and theta
    let mut v_c1 = 0.0f64;
    for i in 0..g.cell_count() {
        for axis in 0..g.dim() {
            if let (Some(lo), Some(hi)) = (g.neighbor(i, axis, -1), g.neighbor(i, axis, 1)) {
                let h2 = 2.0 * g.spacing(axis);
                let dv = (r.v.get(hi) - r.v.get(lo)) / h2;
                let dt = (theta.get(hi) - theta.get(lo)) / h2;
                v_c1 = v_c1.max((dv - dt).abs());
            }
        }
    }

    let (u_viol, v_viol) = r.bound_violations();
    Ok(CompetitionRow {
        alpha,
        coexistence: r.outcome == CompetitionOutcome::Coexistence,
        max_u: r.u.max(),
        u_at_global_peak: r.u.interpolate(global_peak),
        predicted_peak,
        v_c0_error: r.v.sup_diff(theta),
        v_c1_error: v_c1,
        u_bound_violation: u_viol,
        v_bound_violation: v_viol,
        identity_u,
        identity_v,
        deficits,
    })
}

fn write_sweep_csv(out_dir: &Path, cfg: &ExperimentConfig, manifest: &Manifest) -> Result<()> {
    let mut rows: Vec<&AlphaResult> = cfg
        .sweep
        .alphas
        .iter()
        .filter_map(|a| manifest.alpha_results.get(&alpha_key(*a)))
        .collect();
    rows.sort_by(|a, b| a.record.alpha.partial_cmp(&b.record.alpha).unwrap());
    if rows.is_empty() {
        return Ok(());
    }
    let n_peaks = rows[0].record.u_at_peaks.len();
    let n_probes = rows[0].record.probe_log_u.len();
    let mut header = vec!["alpha".to_string(), "d".to_string(), "max_u".to_string()];
    for i in 0..n_peaks {
        header.push(format!("u_at_peak_{i}"));
    }
    header.extend(["mass".to_string(), "identity_residual".to_string(), "profile_sup_err".to_string(), "envelope_C".to_string()]);
    for j in 0..n_probes {
        header.push(format!("gamma_probe_{j}"));
    }
    header.push("lambda0".to_string());

    let mut text = header.join(",") + "\n";
    for r in rows {
        let rec = &r.record;
        let mut fields = vec![fmt(rec.alpha), fmt(rec.d), fmt(rec.max_u)];
        fields.extend(rec.u_at_peaks.iter().map(|v| fmt(*v)));
        fields.push(fmt(rec.mass));
        fields.push(fmt(rec.identity_residual));
        fields.push(rec.profile_sup_err.map(fmt).unwrap_or_default());
        fields.push(fmt(rec.envelope_c));
        fields.extend(rec.probe_log_u.iter().map(|v| fmt(*v)));
        fields.push(fmt(rec.lambda0));
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    write_atomic(&out_dir.join("sweep.csv"), &text)
}

fn write_competition_csv(out_dir: &Path, manifest: &Manifest) -> Result<()> {
    if manifest.competition_rows.is_empty() {
        return Ok(());
    }
    let mut rows: Vec<&CompetitionRow> = manifest.competition_rows.values().collect();
    rows.sort_by(|a, b| a.alpha.partial_cmp(&b.alpha).unwrap());
    let mut text = String::from(
        "alpha,coexistence,max_u,u_at_global_peak,predicted_peak,v_c0_error,v_c1_error,u_bound_violation,v_bound_violation,identity_u,identity_v\n",
    );
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            fmt(r.alpha),
            r.coexistence as u8,
            fmt(r.max_u),
            fmt(r.u_at_global_peak),
            fmt(r.predicted_peak),
            fmt(r.v_c0_error),
            fmt(r.v_c1_error),
            fmt(r.u_bound_violation),
            fmt(r.v_bound_violation),
            fmt(r.identity_u),
            fmt(r.identity_v),
        ));
    }
    write_atomic(&out_dir.join("competition.csv"), &text)
}

/// Plot data: cell coordinates, u, and the limiting-profile prediction.
fn write_profile_csv(
    out_dir: &Path,
    cfg: &ExperimentConfig,
    m: &ResourceFunction,
    g: &Grid,
    cps: &CriticalPointSet,
    alpha: f64,
    u: &ScalarField,
) -> Result<()> {
    let path = out_dir.join(format!("profile_alpha_{alpha}.csv"));
    let values = cps.distinct_max_values();
    let pred = if values.len() == 1 {
        let p = asymptotics::ProfilePrediction { m1: values[0], dim: g.dim() };
        Some(p.field(m, g, alpha, cfg.problem.d))
    } else {
        None
    };
    let mut out = Vec::new();
    if g.dim() == 1 {
        writeln!(out, "x,u,u_pred").unwrap();
    } else {
        writeln!(out, "x,y,u,u_pred").unwrap();
    }
    for i in 0..g.cell_count() {
        let c = g.center(i);
        let pv = pred.as_ref().map(|p| fmt(p.get(i))).unwrap_or_default();
        if g.dim() == 1 {
            writeln!(out, "{},{},{}", fmt(c[0]), fmt(u.get(i)), pv).unwrap();
        } else {
            writeln!(out, "{},{},{},{}", fmt(c[0]), fmt(c[1]), fmt(u.get(i)), pv).unwrap();
        }
    }
    write_atomic(&path, &String::from_utf8(out).unwrap())
}

fn hyp_scalar(s: HypothesisStatus) -> f64 {
    match s {
        HypothesisStatus::Holds => 1.0,
        HypothesisStatus::HoldsWithDelta => 0.5,
        HypothesisStatus::Fails => 0.0,
    }
}

/// Assemble the verdict blocks from the manifest data. Pure bookkeeping:
/// every measurement came from the solvers above.
fn build_verdicts(
    cfg: &ExperimentConfig,
    m: &ResourceFunction,
    g: &Grid,
    cps: &CriticalPointSet,
    hyp: &crate::hypotheses::HypothesisReport,
    manifest: &Manifest,
    checks: &[String],
) -> Result<Vec<VerdictBlock>> {
    let mut out = Vec::new();
    let wants = |name: &str| checks.iter().any(|c| c == name);

    let rows: Vec<&AlphaResult> = cfg
        .sweep
        .alphas
        .iter()
        .filter_map(|a| manifest.alpha_results.get(&alpha_key(*a)))
        .collect();

    if wants("hypotheses") {
        let ok = hyp.unprimed_hold();
        out.push(
            VerdictBlock::new(
                "hypotheses",
                "structural conditions: m positive somewhere; dm/dn <= 0 on the boundary; \
                 finitely many strict interior maxima; positive laplacian at minima and saddles",
                "grid/boundary sampling plus Newton-refined critical points",
            )
            .pass_if(ok)
            .scalar("h1", hyp_scalar(hyp.h1))
            .scalar("h2", hyp_scalar(hyp.h2))
            .scalar("h3", hyp_scalar(hyp.h3))
            .scalar("h4", hyp_scalar(hyp.h4)),
        );
    }

    if rows.is_empty() {
        return Ok(out);
    }

    if wants("pointwise-lower-bound") {
        let applicable: Vec<&&AlphaResult> =
            rows.iter().filter(|r| r.pointwise.applicable).collect();
        let mut block = VerdictBlock::new(
            "pointwise-lower-bound",
            "u(x) > max m * e^{alpha (m(x) - max m)/d} everywhere, and max u > max m, \
             once alpha > d / min m on instances with m > 0 on the closure",
            "cellwise strict comparison at every sweep alpha past the threshold",
        );
        for r in &rows {
            let mut row = BTreeMap::new();
            row.insert("alpha".into(), r.record.alpha);
            row.insert("applicable".into(), r.pointwise.applicable as u8 as f64);
            row.insert("min_margin".into(), r.pointwise.min_margin);
            row.insert("max_u".into(), r.record.max_u);
            block = block.row(row);
        }
        let max_m = ScalarField::sample(m, g).max();
        let status = if applicable.is_empty() {
            VerdictStatus::Vacuous
        } else if applicable
            .iter()
            .all(|r| r.pointwise.holds && r.record.max_u > max_m)
        {
            VerdictStatus::Pass
        } else {
            VerdictStatus::Fail
        };
        out.push(block.status(status));
    }

    if wants("eigenvalue-zero") {
        let tol = 10.0 * cfg.tolerances.tol_residual;
        let ok = rows.iter().all(|r| r.record.lambda0.abs() <= tol)
            && rows.iter().all(|r| r.rq_min_margin >= -1e-6);
        let mut block = VerdictBlock::new(
            "eigenvalue-zero",
            "the steady state is the principal eigenfunction of its own linearization \
             with eigenvalue zero; the weighted Rayleigh quotient of any test field sits above it",
            "symmetric-gauge eigensolve at every alpha plus 50 seeded random test fields",
        )
        .scalar("tolerance", tol);
        for r in &rows {
            let mut row = BTreeMap::new();
            row.insert("alpha".into(), r.record.alpha);
            row.insert("lambda0".into(), r.record.lambda0);
            row.insert("rq_min_margin".into(), r.rq_min_margin);
            block = block.row(row);
        }
        out.push(block.pass_if(ok));
    }

    if wants("concentration") {
        // per-peak deficit trending to <= 5% of the peak value
        let maxima = cps.positive_maxima();
        let mut ok = true;
        let mut block = VerdictBlock::new(
            "concentration",
            "for every positive strict interior maximum x0 and every ball around it, \
             sup_B u approaches at least m(x0) as alpha grows",
            "deficit m(x0) - sup_B u decreasing across the sweep and below 5% of m(x0) \
             at the final alpha",
        )
        .scalar("ball_radius", cfg.barrier.ball_radius);
        for r in &rows {
            let mut row = BTreeMap::new();
            row.insert("alpha".into(), r.record.alpha);
            for (k, d) in r.deficits.iter().enumerate() {
                row.insert(format!("deficit_{k}"), *d);
            }
            block = block.row(row);
        }
        for (k, p) in maxima.iter().enumerate() {
            let series: Vec<f64> = rows.iter().map(|r| r.deficits[k]).collect();
            let last = *series.last().unwrap();
            if !(last <= 0.05 * p.value) {
                ok = false;
            }
            // positive part must not grow
            let plus: Vec<f64> = series.iter().map(|d| d.max(0.0)).collect();
            if plus.windows(2).any(|w| w[1] > w[0] + 1e-12) {
                ok = false;
            }
        }
        out.push(block.pass_if(ok));
    }

    if wants("decay-rate") {
        let c_min = cfg.barrier.c_values.iter().copied().fold(f64::INFINITY, f64::min);
        let probes = decay_probes(m, g, cps, c_min)?;
        let mut block = VerdictBlock::new(
            "decay-rate",
            "away from the maxima the state decays like e^{-gamma alpha} with gamma > 0, \
             at least as fast as the barrier envelope rate eps c (1-c) m_1",
            "least-squares slope of ln u(probe) against alpha at two probes; \
             cross-checked against the rate implied by the constructed barrier",
        );
        let mut ok = true;
        for (j, probe) in probes.iter().enumerate() {
            let samples: Vec<(f64, f64)> = rows
                .iter()
                .map(|r| (r.record.alpha, r.record.probe_log_u[j]))
                .collect();
            let (gamma, r2) = fit_decay_rate(&samples)?;
            // barrier-implied rate for the smallest c in the config
            let barrier_rate = rows
                .last()
                .unwrap()
                .barrier_rows
                .iter()
                .find(|b| (b.c - c_min).abs() < 1e-12)
                .map(|b| {
                    let m1 = cps.distinct_max_values()[0];
                    b.eps[0] * b.c * (1.0 - b.c) * m1
                })
                .unwrap_or(0.0);
            if !(gamma > 0.0 && r2 >= 0.99 && gamma >= 0.9 * barrier_rate) {
                ok = false;
            }
            block = block
                .scalar(&format!("gamma_hat_{j}"), gamma)
                .scalar(&format!("r_squared_{j}"), r2)
                .scalar(&format!("barrier_rate_{j}"), barrier_rate)
                .scalar(&format!("probe_{j}_x"), probe[0]);
        }
        out.push(block.pass_if(ok));
    }

    if wants("barrier") {
        let mut block = VerdictBlock::new(
            "barrier",
            "the piecewise exponential majorant satisfies L(ubar) <= 0 beyond a finite \
             alpha_0, its interface inequalities hold with margins growing in alpha, \
             and it dominates the steady state",
            "analytic evaluation of L on every cell at each sweep alpha for each c; \
             domination checked cellwise against the solved state",
        );
        let mut ok = true;
        for &c in &cfg.barrier.c_values {
            let series: Vec<&BarrierRow> = rows
                .iter()
                .flat_map(|r| r.barrier_rows.iter().filter(|b| (b.c - c).abs() < 1e-12))
                .collect();
            // alpha0: first sweep alpha where the sign condition holds
            let alpha0 = series
                .iter()
                .find(|b| b.max_l_upper <= 0.0)
                .map(|b| b.alpha);
            match alpha0 {
                None => ok = false,
                Some(a0) => {
                    block = block.scalar(&format!("alpha0_c_{c}"), a0);
                    for b in &series {
                        if b.alpha >= a0 {
                            if b.max_l_upper > 0.0
                                || b.min_upper_minus_u < -1e-6 * b.max_u
                                || (b.min_interface_margin.is_finite()
                                    && b.min_interface_margin <= 0.0)
                            {
                                ok = false;
                            }
                        }
                    }
                }
            }
            for b in &series {
                let mut row = BTreeMap::new();
                row.insert("alpha".into(), b.alpha);
                row.insert("c".into(), b.c);
                row.insert("max_L_upper".into(), b.max_l_upper);
                row.insert("min_upper_minus_u".into(), b.min_upper_minus_u);
                row.insert("min_interface_margin".into(), b.min_interface_margin);
                block = block.row(row);
            }
        }
        out.push(block.pass_if(ok));
    }

    if wants("profile") {
        let values = cps.distinct_max_values();
        if values.len() != 1 {
            out.push(
                VerdictBlock::new(
                    "profile",
                    "sup |u - 2^{N/2} m_1 e^{alpha (m - m_1)/d}| vanishes as alpha grows \
                     (equal peak values)",
                    "not applicable: maxima take several distinct values",
                )
                .status(VerdictStatus::Vacuous),
            );
        } else {
            let m1 = values[0];
            let dimf = 2f64.powf(g.dim() as f64 / 2.0);
            let target = dimf * m1;
            let errs: Vec<f64> = rows
                .iter()
                .map(|r| r.record.profile_sup_err.unwrap())
                .collect();
            let last_peak = *rows.last().unwrap().record.u_at_peaks.first().unwrap();
            let ok = strictly_decreasing(&errs) && (last_peak - target).abs() <= 0.1 * target;
            let mut block = VerdictBlock::new(
                "profile",
                "the state approaches 2^{N/2} m_1 e^{alpha (m - m_1)/d} uniformly",
                "sup error strictly decreasing across the sweep; peak value within 10% \
                 of 2^{N/2} m_1 at the final alpha",
            )
            .scalar("target_peak", target)
            .scalar("final_peak", last_peak);
            for r in &rows {
                let mut row = BTreeMap::new();
                row.insert("alpha".into(), r.record.alpha);
                row.insert("profile_sup_err".into(), r.record.profile_sup_err.unwrap());
                row.insert("u_at_peak_0".into(), r.record.u_at_peaks[0]);
                block = block.row(row);
            }
            out.push(block.pass_if(ok));
        }
    }

    if wants("gaussian-rescale") {
        let last = rows.last().unwrap();
        let ok = last.gaussian_sup_err <= 0.1 && last.center_ratio > 0.9;
        let mut block = VerdictBlock::new(
            "gaussian-rescale",
            "zooming to the peak at scale sqrt(d/alpha), the normalized profile tends to \
             the Gaussian e^{y^T D2m(x0) y / 2} with value 1 at the center",
            "sup error over |y| <= 2 at the largest alpha, with the trend recorded",
        );
        for r in &rows {
            let mut row = BTreeMap::new();
            row.insert("alpha".into(), r.record.alpha);
            row.insert("gaussian_sup_err".into(), r.gaussian_sup_err);
            row.insert("center_ratio".into(), r.center_ratio);
            block = block.row(row);
        }
        out.push(block.pass_if(ok));
    }

    if wants("mass") {
        let masses: Vec<f64> = rows.iter().map(|r| r.record.mass).collect();
        let identities_ok = rows.iter().all(|r| {
            r.record.identity_residual.abs()
                <= 10.0 * cfg.tolerances.tol_residual * g.domain_volume()
        });
        // constant m keeps its mass; anything else must decrease
        let m_field = ScalarField::sample(m, g);
        let is_constant = (m_field.max() - m_field.min()).abs() < 1e-12;
        let trend_ok = if is_constant {
            masses.windows(2).all(|w| (w[1] - w[0]).abs() < 1e-9)
        } else {
            strictly_decreasing(&masses)
        };
        let mut block = VerdictBlock::new(
            "mass",
            "total population tends to zero under strengthening advection (nonconstant m), \
             while the steady-state integral identity holds at every alpha",
            "strict mass decrease across the sweep; |int u(m-u)| <= 10 tol |Omega| per record",
        );
        for r in &rows {
            let mut row = BTreeMap::new();
            row.insert("alpha".into(), r.record.alpha);
            row.insert("mass".into(), r.record.mass);
            row.insert("identity_residual".into(), r.record.identity_residual);
            block = block.row(row);
        }
        out.push(block.pass_if(identities_ok && trend_ok));
    }

    if wants("theta-limit") {
        if let Some(v) = &manifest.theta_limits {
            let ok = v.sup_errors_decreasing && v.global_peak_gaps.iter().all(|gp| *gp > 0.0);
            let mut block = VerdictBlock::new(
                "theta-limit",
                "theta_d converges uniformly to max(m, 0) as d -> 0, and near the global \
                 maxima m(x0) - theta_d(x0) stays positive for small d",
                "sup |theta_d - m^+| strictly decreasing over the configured d list; \
                 gap sign asserted at global maxima only, recorded elsewhere",
            );
            for (i, d) in v.d_values.iter().enumerate() {
                let mut row = BTreeMap::new();
                row.insert("d".into(), *d);
                row.insert("sup_err".into(), v.sup_errors[i]);
                block = block.row(row);
            }
            for (i, gp) in v.global_peak_gaps.iter().enumerate() {
                block = block.scalar(&format!("global_peak_gap_{i}"), *gp);
            }
            for (i, gp) in v.other_peak_gaps.iter().enumerate() {
                block = block.scalar(&format!("other_peak_gap_{i}"), *gp);
            }
            out.push(block.pass_if(ok));
        }
    }

    if wants("competition") {
        if !manifest.competition_rows.is_empty() || manifest.exclusion.is_some() {
            let mut block = VerdictBlock::new(
                "competition",
                "slower diffusion wins without advection; with strong advection the \
                 advective species coexists, squeezed under the single-species state, \
                 while its rival approaches theta_{d2}; at the peaks U tends to \
                 2^{N/2}(m_1 - theta_{d2}(x0))",
                "exclusion run at alpha = 0; sandwich bounds, V error trends and the \
                 peak-value comparison across the alpha sweep",
            );
            let mut ok = true;
            if let Some(ex) = &manifest.exclusion {
                block = block
                    .scalar("exclusion_sup_u", ex.sup_u)
                    .scalar("exclusion_v_gap", ex.v_gap_to_theta);
                if ex.sup_u > 1e-6 {
                    ok = false;
                }
            }
            let mut crows: Vec<&CompetitionRow> = manifest.competition_rows.values().collect();
            crows.sort_by(|a, b| a.alpha.partial_cmp(&b.alpha).unwrap());
            if !crows.is_empty() {
                let scale = crows
                    .iter()
                    .map(|r| r.max_u)
                    .fold(0.0f64, f64::max)
                    .max(1.0);
                for r in &crows {
                    if r.u_bound_violation > 1e-6 * scale || r.v_bound_violation > 1e-6 * scale {
                        ok = false;
                    }
                    if !r.coexistence {
                        ok = false;
                    }
                    let mut row = BTreeMap::new();
                    row.insert("alpha".into(), r.alpha);
                    row.insert("u_at_global_peak".into(), r.u_at_global_peak);
                    row.insert("predicted_peak".into(), r.predicted_peak);
                    row.insert("v_c0_error".into(), r.v_c0_error);
                    row.insert("v_c1_error".into(), r.v_c1_error);
                    block = block.row(row);
                }
                let v_errs: Vec<f64> = crows.iter().map(|r| r.v_c0_error).collect();
                if !strictly_decreasing(&v_errs) {
                    ok = false;
                }
                let last = crows.last().unwrap();
                if (last.u_at_global_peak - last.predicted_peak).abs() > 0.1 * last.predicted_peak
                {
                    ok = false;
                }
            }
            out.push(block.pass_if(ok));
        }
    }

    Ok(out)
}
