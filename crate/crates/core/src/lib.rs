//! Pseudo-spectral simulation and verification laboratory for the
//! Euler-Poincaré equations on periodic domains in 1D and 2D.
//!
//! The crate is organized in layers:
//!
//! * [`grid`] — periodic grids, FFTs, spectral derivatives, the Helmholtz
//!   multiplier pair, 2/3-rule dealiasing and dyadic shell filters;
//! * [`state`] — velocity and momentum fields, the Helmholtz link between
//!   them, reflection symmetrization and field serialization;
//! * [`rhs`] — the convective and conservative (stress-tensor) forms of the
//!   evolution operator, the zero-dispersion hyperbolic system and the flux
//!   Jacobian eigenstructure;
//! * [`integrate`] — explicit RK2/RK4 stepping with blow-up guards;
//! * [`diagnostics`] — conserved integrals, deformation tensor, dyadic-shell
//!   sup-norm monitor, divergence-at-origin with its Riccati envelope, the
//!   zero-dispersion error functional, weak-form residuals and the trace
//!   functional;
//! * [`experiments`] — scripted studies (conservation, blow-up, alpha sweep,
//!   traveling wave) with pinned pass/fail thresholds in [`tolerances`].

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod integrate;
pub mod rhs;
pub mod state;
pub mod tolerances;

pub use error::{Error, Result};
pub use grid::{
    dealias, helmholtz_apply, helmholtz_invert, laplacian, partial_derivative, shell_filter,
    shell_index, shell_range, Grid, ScalarField,
};
pub use state::{
    momentum_from_velocity, reflect_symmetrize, velocity_from_momentum, MomentumField,
    SimulationState, VelocityField,
};
