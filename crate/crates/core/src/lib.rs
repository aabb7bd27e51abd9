//! Numerical workbench for a 2D chemotaxis-fluid system and the sharp
//! constants of the exponential embedding inequalities its long-time
//! analysis rests on.
//!
//! Three pillars:
//! - [`variational`]: minimize the embedding functional and estimate the
//!   sharp weight `beta0` by bisection.
//! - [`ineq`]: evaluate both sides of the entropy-gradient inequalities on
//!   field ensembles and report margins.
//! - [`solver`] + [`diagnostics`]: time-step the regularized
//!   chemotaxis-Navier-Stokes system on a rectangle while tracking mass,
//!   monotone norms, dissipation budgets and a Lyapunov functional.

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod ineq;
pub mod pipeline;
pub mod solver;
pub mod spectral;
pub mod variational;

pub use error::{Error, Result};

/// Version string recorded in run manifests.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
