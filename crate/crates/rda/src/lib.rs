//! Steady states of the logistic reaction-diffusion-advection equation
//!
//! ```text
//! u_t = div(d grad u - alpha u grad m) + u (m - u)   in Omega,
//! d du/dn - alpha u dm/dn = 0                        on the boundary,
//! ```
//!
//! on axis-aligned boxes in 1D and 2D, together with the machinery needed
//! to verify how the steady state behaves as the advection rate grows:
//! principal-eigenvalue checks in the symmetric gauge, piecewise
//! exponential upper solutions, pointwise bounds, decay-rate fits,
//! Gaussian rescaled profiles, and the two-species competition system.
//!
//! Start with [`steady::solve_single`] for the single-species steady
//! state, or run a full experiment through [`harness`]. The `examples/`
//! directory has one runnable example per capability.

pub mod asymptotics;
pub mod barrier;
pub mod competition;
pub mod components;
pub mod critical;
pub mod error;
pub mod expr;
pub mod field;
pub mod flux;
pub mod grid;
pub mod harness;
pub mod hypotheses;
pub mod sparse;
pub mod spectral;
pub mod steady;

pub use error::{Error, Result};
pub use expr::ResourceFunction;
pub use field::ScalarField;
pub use grid::Grid;
