//! Backward Euler–Maruyama time stepping for multi-valued stochastic
//! differential equations
//!
//! ```text
//! dX + f(X) dt ∋ b(X) dt + g(X) dW,    X(0) = X0,
//! ```
//!
//! where `f` is maximal monotone (possibly set-valued, e.g. the
//! subdifferential of `|x|`), `b` is Lipschitz and `g` is a Lipschitz
//! diffusion. The drift `f` is only ever accessed through its resolvent
//! `w ↦ (I + k f)^{-1} w`, so genuinely multi-valued drifts need no set
//! representation.
//!
//! Module map:
//!
//! - [`problem`]: operator traits, growth/Lipschitz metadata, step-size gates.
//! - [`wiener`]: reproducible Brownian paths, exact coarsening, the linear
//!   interpolant of `W` and its Monte Carlo error check.
//! - [`stepper`]: the implicit step solver and the backward Euler recursion.
//! - [`models`]: built-in drifts (sign subdifferential, power potentials,
//!   monotone linear maps) and simple `b`, `g`, initial laws.
//! - [`fem`]: 1D P1 finite element semi-discretization of the stochastic
//!   p-Laplace equation.
//! - [`experiments`]: coupled-path strong-error tables, rate fits and
//!   a priori diagnostics.

pub mod error;
pub mod experiments;
pub mod fem;
mod linalg;
pub mod models;
pub mod problem;
pub mod stats;
pub mod stepper;
pub mod wiener;

pub use error::{MsdeError, Result};
pub use experiments::{
    apriori_diagnostics, eta_integral_error, fit_rate, monotone_gap, strong_error,
    DiagnosticsReport, LevelDiagnostics, RateFit, RateRow, RateTable,
};
pub use problem::{
    validate_step_size, DiffusionMap, GateCheck, GrowthParams, InitialLaw, LipschitzMap,
    MonotoneDrift, ProblemSpec, StepGate,
};
pub use stepper::{resolve_step, run_backward_euler, StepSolverConfig, Trajectory};
pub use wiener::{BrownianPath, Grid};

pub use nalgebra::{DMatrix, DVector};

/// Library version, echoed into experiment metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
