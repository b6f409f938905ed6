//! Pinned numerical thresholds used by the experiment runners and the
//! acceptance suite. Everything pass/fail in this crate points back here.

/// Relative L2 agreement required between the convective and conservative
/// forms on band-limited fields. Both paths are exact spectral algebra, so
/// the gap is accumulated rounding; 1e-10 leaves two orders of headroom over
/// observed values at N = 64.
pub const FORM_EQUIVALENCE_REL: f64 = 1e-10;

/// Pointwise trace-identity tolerance, relative to the stress scale. The
/// identity is finite products and sums of the same gradients, so it holds
/// to a few ulps.
pub const TRACE_IDENTITY_REL: f64 = 1e-12;

/// Helmholtz apply/invert round trip, relative L2.
pub const HELMHOLTZ_ROUNDTRIP_REL: f64 = 1e-12;

/// Relative drift of the momentum integral along smooth trajectories. The
/// integral is preserved to rounding per step; 1e-9 covers accumulation over
/// tens of thousands of steps.
pub const MOMENTUM_DRIFT_REL: f64 = 1e-9;

/// Relative drift of Int(|u|^2 + alpha |grad u|^2) under RK4. Not exactly
/// conserved by the scheme; O(dt^4) per unit time at dt = 1e-3 sits far
/// below this.
pub const ENERGY_DRIFT_REL: f64 = 1e-6;

/// Relative drift of Int |u|^2 for the zero-dispersion system on a
/// pre-blow-up window.
pub const ENTROPY_DRIFT_REL: f64 = 1e-6;

/// Blow-up guard factor: default threshold is this times the initial energy.
pub const BLOWUP_NORM_FACTOR: f64 = 1e6;

/// Default adaptive-step floor.
pub const DT_FLOOR_DEFAULT: f64 = 1e-10;

/// The guard must trip no later than `BLOWUP_TRIP_MARGIN / |d0|` for
/// divergence-negative reflection-symmetric data (10% slack on the envelope
/// horizon).
pub const BLOWUP_TRIP_MARGIN: f64 = 1.1;

/// Slack for the pointwise Riccati envelope check:
/// `div u(0,t) <= bound + RICCATI_ENVELOPE_TOL * (1 + |bound|)`.
pub const RICCATI_ENVELOPE_TOL: f64 = 1e-3;

/// Allowed relative change of the trip time when the resolution doubles.
pub const BLOWUP_RESOLUTION_DRIFT: f64 = 0.05;

/// Reflection symmetry must persist to this relative level until the guard
/// trips.
pub const SYMMETRY_PRESERVATION_REL: f64 = 1e-10;

/// Window for the fitted log-log slope of the dispersive error functional
/// against alpha.
pub const SWEEP_SLOPE_MIN: f64 = 0.85;
pub const SWEEP_SLOPE_MAX: f64 = 1.15;

/// Traveling-wave speed must match the nominal speed to 2%.
pub const WAVE_SPEED_TOL: f64 = 0.02;

/// Traveling-wave L2 shape error budget (mollified profile, t_end = 5).
pub const WAVE_SHAPE_TOL: f64 = 0.05;

/// Divergence evolution identity residual, relative to the gradient scale.
pub const DIV_IDENTITY_REL: f64 = 1e-8;

/// Self-convergence factor window for RK4 when halving dt.
pub const RK4_ORDER_MIN: f64 = 14.0;
pub const RK4_ORDER_MAX: f64 = 18.0;

/// Numeric-vs-analytic agreement for the flux Jacobian spectrum.
pub const FLUX_EIGEN_TOL: f64 = 1e-10;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds_are_ordered_sanely() {
        assert!(TRACE_IDENTITY_REL < FORM_EQUIVALENCE_REL);
        assert!(MOMENTUM_DRIFT_REL < ENERGY_DRIFT_REL);
        assert!(SWEEP_SLOPE_MIN < 1.0 && 1.0 < SWEEP_SLOPE_MAX);
        assert!(RK4_ORDER_MIN < 16.0 && 16.0 < RK4_ORDER_MAX);
        assert!(BLOWUP_TRIP_MARGIN > 1.0);
    }
}
