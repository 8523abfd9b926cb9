//! Experiment configuration: a TOML file with the resource expression, the
//! grid, the sweeps and the checks to run. See the README for the full
//! format and an annotated example.

use crate::error::{Error, Result};
use crate::expr::ResourceFunction;
use crate::grid::{Axis, Grid};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemSection {
    /// Prefix-notation expression for m(x).
    pub m: String,
    /// Per-axis extents, e.g. [[-1.0, 1.0]] or [[-1,1],[-1,1]].
    pub extents: Vec<[f64; 2]>,
    /// Per-axis cell counts.
    pub cells: Vec<usize>,
    /// Diffusion rate of the single species (and of U in competition).
    #[serde(default = "default_d")]
    pub d: f64,
}

fn default_d() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSection {
    /// Increasing advection rates.
    pub alphas: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BarrierSection {
    #[serde(default = "default_c_values")]
    pub c_values: Vec<f64>,
    /// Ball radius for the concentration checks.
    #[serde(default = "default_ball_radius")]
    pub ball_radius: f64,
}

fn default_c_values() -> Vec<f64> {
    vec![0.9, 0.95, 0.99]
}

fn default_ball_radius() -> f64 {
    0.3
}

impl Default for BarrierSection {
    fn default() -> Self {
        Self { c_values: default_c_values(), ball_radius: default_ball_radius() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompetitionSection {
    pub d1: f64,
    pub d2: f64,
    pub alphas: Vec<f64>,
    /// Also run the alpha = 0 exclusion reference case.
    #[serde(default)]
    pub include_exclusion_case: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThetaSection {
    /// Decreasing diffusion rates for the small-diffusion limit sweep.
    pub d_values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TolerancesSection {
    #[serde(default = "default_tol_residual")]
    pub tol_residual: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_tol_residual() -> f64 {
    1e-10
}

fn default_max_steps() -> usize {
    50_000
}

impl Default for TolerancesSection {
    fn default() -> Self {
        Self { tol_residual: default_tol_residual(), max_steps: default_max_steps() }
    }
}

/// Names of the single-species checks the runner knows.
pub const KNOWN_CHECKS: &[&str] = &[
    "hypotheses",
    "pointwise-lower-bound",
    "eigenvalue-zero",
    "concentration",
    "decay-rate",
    "barrier",
    "profile",
    "gaussian-rescale",
    "mass",
    "theta-limit",
    "competition",
];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChecksSection {
    pub run: Vec<String>,
}

impl Default for ChecksSection {
    fn default() -> Self {
        Self { run: KNOWN_CHECKS.iter().map(|s| s.to_string()).collect() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    pub sweep: SweepSection,
    #[serde(default)]
    pub barrier: BarrierSection,
    #[serde(default)]
    pub checks: ChecksSection,
    pub competition: Option<CompetitionSection>,
    pub theta: Option<ThetaSection>,
    #[serde(default)]
    pub tolerances: TolerancesSection,
    pub output: OutputSection,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    42
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("TOML parse error: {e}")))?;
        cfg.validate(false)?;
        Ok(cfg)
    }

    pub fn resource(&self) -> Result<ResourceFunction> {
        ResourceFunction::parse(&self.problem.m)
    }

    pub fn grid(&self) -> Result<Grid> {
        if self.problem.extents.len() != self.problem.cells.len() {
            return Err(Error::Config(format!(
                "extents ({}) and cells ({}) must have the same length",
                self.problem.extents.len(),
                self.problem.cells.len()
            )));
        }
        let axes = self
            .problem
            .extents
            .iter()
            .zip(&self.problem.cells)
            .map(|(e, &n)| Axis { lo: e[0], hi: e[1], cells: n })
            .collect();
        Grid::new(axes)
    }

    /// Structural validation plus the resolution gate. With
    /// `allow_unresolvable` the gate degrades to a warning (expert
    /// override from the CLI).
    pub fn validate(&self, allow_unresolvable: bool) -> Result<()> {
        let m = self.resource()?;
        let g = self.grid()?;
        if m.dimension_hint() > g.dim() {
            return Err(Error::Config(format!(
                "expression references {} coordinates but the grid is {}-dimensional",
                m.dimension_hint(),
                g.dim()
            )));
        }
        if self.problem.d <= 0.0 {
            return Err(Error::Config("d must be positive".into()));
        }
        if self.sweep.alphas.is_empty() {
            return Err(Error::Config("sweep.alphas must be nonempty".into()));
        }
        if !self.sweep.alphas.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::Config("sweep.alphas must be strictly increasing".into()));
        }
        for name in &self.checks.run {
            if !KNOWN_CHECKS.contains(&name.as_str()) {
                return Err(Error::Config(format!(
                    "unknown check `{name}`; known: {KNOWN_CHECKS:?}"
                )));
            }
        }
        let gate = |alphas: &[f64], d: f64| -> Result<()> {
            let max_alpha = g.max_resolvable_alpha(d);
            for &a in alphas {
                if a > max_alpha {
                    let msg = format!(
                        "alpha = {a} at d = {d} is beyond the grid's resolvable range \
                         (max admissible alpha = {max_alpha:.3}); refine the grid or drop alpha"
                    );
                    if allow_unresolvable {
                        eprintln!("warning: {msg} (override active)");
                    } else {
                        return Err(Error::ResolutionGate(msg));
                    }
                }
            }
            Ok(())
        };
        gate(&self.sweep.alphas, self.problem.d)?;
        if let Some(comp) = &self.competition {
            if comp.d1 <= 0.0 || comp.d2 <= 0.0 {
                return Err(Error::Config("competition diffusion rates must be positive".into()));
            }
            gate(&comp.alphas, comp.d1)?;
            // existence of theta_{d2} needs positive total resource
            let m_field = crate::field::ScalarField::sample(&m, &g);
            if m_field.integrate() <= 0.0 {
                return Err(Error::Config(
                    "competition requires int m > 0 (existence of the diffusive reference state)"
                        .into(),
                ));
            }
        }
        if let Some(theta) = &self.theta {
            if theta.d_values.len() < 2 || !theta.d_values.windows(2).all(|w| w[1] < w[0]) {
                return Err(Error::Config("theta.d_values must be decreasing".into()));
            }
        }
        Ok(())
    }

    /// Output directory, honoring the RDA_OUT_ROOT environment variable
    /// for relative paths.
    pub fn output_dir(&self) -> PathBuf {
        if self.output.dir.is_absolute() {
            self.output.dir.clone()
        } else if let Ok(root) = std::env::var("RDA_OUT_ROOT") {
            PathBuf::from(root).join(&self.output.dir)
        } else {
            self.output.dir.clone()
        }
    }
}
