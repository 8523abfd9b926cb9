use thiserror::Error;

/// Errors surfaced by solvers, constructors and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("expression parse error: {0}")]
    Parse(String),

    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    LinearSolve {
        iterations: usize,
        residual: f64,
        /// Relative residual after each iteration, for diagnostics.
        history: Vec<f64>,
    },

    #[error("nonlinear solver stagnated: {0}")]
    Stagnation(String),

    #[error("barrier constraint violated: {0}")]
    BarrierConstraint(String),

    #[error("barrier ordering violated at iterate {iterate}, cell {cell}: not a valid upper/lower pair")]
    BarrierOrdering { iterate: usize, cell: usize },

    #[error("eigensolver breakdown: {reason} (shifts tried: {shifts:?})")]
    EigenBreakdown { reason: String, shifts: Vec<f64> },

    #[error("resolution gate: {0}")]
    ResolutionGate(String),

    #[error("field contains non-finite values: {0}")]
    NonFinite(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
