//! Explicit time stepping with blow-up guards and trajectory observers.
//!
//! The prognostic variable is the spectral momentum `mhat`; each stage maps
//! back to velocity through the Helmholtz inverse, evaluates a physical-space
//! tendency and returns to spectral space. At `alpha = 0` the multiplier is
//! the identity and the same path advances the velocity directly.

use num_complex::Complex;

use crate::diagnostics::{conserved_energy, DiagnosticRecord};
use crate::error::{Error, Result};
use crate::grid::{ScalarField, Spectrum};
use crate::rhs::{rhs_conservative_with, rhs_convective_with, rhs_zero_alpha_with};
use crate::state::{MomentumField, SimulationState, VelocityField};
use crate::tolerances::{BLOWUP_NORM_FACTOR, DT_FLOOR_DEFAULT};

/// Time stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Rk4,
    Rk2,
}

/// Integration controls; validated before use.
#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    /// Fixed step, or the step ceiling when `adaptive` is set.
    pub dt: f64,
    pub scheme: Scheme,
    pub t_end: f64,
    /// CFL factor in (0, 1] for the adaptive step
    /// `dt = cfl_safety / (max|u| * k_max)`.
    pub cfl_safety: f64,
    pub adaptive: bool,
    /// Guard threshold on `|grad u|_inf`; `None` means
    /// `BLOWUP_NORM_FACTOR` times the initial energy.
    pub blowup_norm_threshold: Option<f64>,
    pub dt_floor: f64,
    pub dealias_products: bool,
    /// Diagnostics are recorded every this many accepted steps.
    pub sample_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: 1e-3,
            scheme: Scheme::Rk4,
            t_end: 1.0,
            cfl_safety: 0.5,
            adaptive: false,
            blowup_norm_threshold: None,
            dt_floor: DT_FLOOR_DEFAULT,
            dealias_products: true,
            sample_stride: 1,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidIntegratorConfig(msg));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end > 0.0) || self.dt > self.t_end {
            return bad(format!(
                "need 0 < dt <= t_end, got dt = {}, t_end = {}",
                self.dt, self.t_end
            ));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad(format!("cfl_safety must lie in (0, 1], got {}", self.cfl_safety));
        }
        if !(self.dt_floor > 0.0) || self.dt_floor >= self.dt {
            return bad(format!(
                "need 0 < dt_floor < dt, got dt_floor = {}, dt = {}",
                self.dt_floor, self.dt
            ));
        }
        if self.sample_stride == 0 {
            return bad("sample_stride must be at least 1".into());
        }
        Ok(())
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    Completed,
    BlowupNorm,
    DtUnderflow,
    NanDetected,
}

impl TerminationReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminationReason::Completed => "completed",
            TerminationReason::BlowupNorm => "blowup_norm",
            TerminationReason::DtUnderflow => "dt_underflow",
            TerminationReason::NanDetected => "nan_detected",
        }
    }

    pub fn is_trip(&self) -> bool {
        !matches!(self, TerminationReason::Completed)
    }
}

/// Final report of an [`integrate`] run.
#[derive(Debug, Clone)]
pub struct TerminationReport {
    pub reason: TerminationReason,
    pub t_final: f64,
    /// Present only when the run did not complete; fitted from the recorded
    /// gradient sup-norm history when the tail allows it.
    pub estimated_blowup_time: Option<f64>,
}

/// A physical-space momentum tendency `dm/dt` evaluated on a state.
pub trait MomentumRhs {
    fn tendency(&self, state: &SimulationState) -> Result<MomentumField>;
}

impl<F> MomentumRhs for F
where
    F: Fn(&SimulationState) -> Result<MomentumField>,
{
    fn tendency(&self, state: &SimulationState) -> Result<MomentumField> {
        self(state)
    }
}

/// Which analytic form drives the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsForm {
    Convective,
    Conservative,
    ZeroAlpha,
}

/// The library evolution operators behind the [`MomentumRhs`] interface.
#[derive(Debug, Clone, Copy)]
pub struct EpRhs {
    pub form: RhsForm,
    pub dealias: bool,
}

impl EpRhs {
    pub fn convective() -> EpRhs {
        EpRhs {
            form: RhsForm::Convective,
            dealias: true,
        }
    }

    pub fn zero_alpha() -> EpRhs {
        EpRhs {
            form: RhsForm::ZeroAlpha,
            dealias: true,
        }
    }
}

impl MomentumRhs for EpRhs {
    fn tendency(&self, state: &SimulationState) -> Result<MomentumField> {
        match self.form {
            RhsForm::Convective => rhs_convective_with(state, self.dealias),
            RhsForm::Conservative => rhs_conservative_with(state, self.dealias),
            RhsForm::ZeroAlpha => {
                if state.alpha != 0.0 {
                    return Err(Error::InvalidIntegratorConfig(
                        "zero-dispersion form requires alpha = 0".into(),
                    ));
                }
                let t = rhs_zero_alpha_with(&state.velocity, self.dealias)?;
                MomentumField::new(t.components().to_vec(), 0.0)
            }
        }
    }
}

fn momentum_spectra(state: &SimulationState) -> Vec<Spectrum> {
    let alpha = state.alpha;
    state
        .velocity
        .components()
        .iter()
        .map(|c| c.spectrum().scale_by_k2(|k2| 1.0 + alpha * k2))
        .collect()
}

fn velocity_from_spectra(alpha: f64, mhat: &[Spectrum]) -> Result<VelocityField> {
    let comps: Vec<ScalarField> = mhat
        .iter()
        .map(|h| h.scale_by_k2(|k2| 1.0 / (1.0 + alpha * k2)).into_field())
        .collect();
    VelocityField::new(comps)
}

fn tendency_spectra(
    rhs: &dyn MomentumRhs,
    time: f64,
    alpha: f64,
    mhat: &[Spectrum],
) -> Result<Vec<Spectrum>> {
    let velocity = velocity_from_spectra(alpha, mhat)?;
    if !velocity.is_finite() {
        return Err(Error::NonFinite("stage velocity"));
    }
    let state = SimulationState {
        time,
        velocity,
        alpha,
    };
    let t = rhs.tendency(&state)?;
    Ok(t.components().iter().map(|c| c.spectrum()).collect())
}

fn axpy(y: &[Spectrum], k: &[Spectrum], scale: f64) -> Vec<Spectrum> {
    y.iter()
        .zip(k)
        .map(|(a, b)| {
            let mut out = a.clone();
            out.add_scaled_in_place(b, Complex::new(scale, 0.0));
            out
        })
        .collect()
}

/// One classical four-stage Runge-Kutta step of the spectral momentum.
pub fn rk4_step(s: &SimulationState, rhs: &dyn MomentumRhs, dt: f64) -> Result<SimulationState> {
    let t = s.time;
    let alpha = s.alpha;
    let y0 = momentum_spectra(s);
    let k1 = tendency_spectra(rhs, t, alpha, &y0)?;
    let k2 = tendency_spectra(rhs, t + 0.5 * dt, alpha, &axpy(&y0, &k1, 0.5 * dt))?;
    let k3 = tendency_spectra(rhs, t + 0.5 * dt, alpha, &axpy(&y0, &k2, 0.5 * dt))?;
    let k4 = tendency_spectra(rhs, t + dt, alpha, &axpy(&y0, &k3, dt))?;
    let mut y1 = y0;
    for (i, y) in y1.iter_mut().enumerate() {
        y.add_scaled_in_place(&k1[i], Complex::new(dt / 6.0, 0.0));
        y.add_scaled_in_place(&k2[i], Complex::new(dt / 3.0, 0.0));
        y.add_scaled_in_place(&k3[i], Complex::new(dt / 3.0, 0.0));
        y.add_scaled_in_place(&k4[i], Complex::new(dt / 6.0, 0.0));
    }
    let velocity = velocity_from_spectra(alpha, &y1)?;
    if !velocity.is_finite() {
        return Err(Error::NonFinite("rk4 update"));
    }
    Ok(SimulationState {
        time: t + dt,
        velocity,
        alpha,
    })
}

/// One explicit midpoint step.
pub fn rk2_step(s: &SimulationState, rhs: &dyn MomentumRhs, dt: f64) -> Result<SimulationState> {
    let t = s.time;
    let alpha = s.alpha;
    let y0 = momentum_spectra(s);
    let k1 = tendency_spectra(rhs, t, alpha, &y0)?;
    let k2 = tendency_spectra(rhs, t + 0.5 * dt, alpha, &axpy(&y0, &k1, 0.5 * dt))?;
    let y1 = axpy(&y0, &k2, dt);
    let velocity = velocity_from_spectra(alpha, &y1)?;
    if !velocity.is_finite() {
        return Err(Error::NonFinite("rk2 update"));
    }
    Ok(SimulationState {
        time: t + dt,
        velocity,
        alpha,
    })
}

/// Observer callback invoked on every recorded diagnostic row.
pub type Observer<'a> = &'a mut dyn FnMut(&SimulationState, &DiagnosticRecord);

/// Advance `s0` until `t_end` or a guard trip. Guards never escape as
/// errors and observers never see a non-finite state.
pub fn integrate(
    s0: &SimulationState,
    cfg: &IntegratorConfig,
    rhs: &dyn MomentumRhs,
    observers: &mut [Observer<'_>],
) -> Result<(SimulationState, TerminationReport, Vec<DiagnosticRecord>)> {
    cfg.validate()?;

    let mut state = s0.clone();
    if cfg.dealias_products {
        // Project the initial data onto the dealiased band so that the
        // band-preservation argument applies from the first step.
        let comps = state
            .velocity
            .components()
            .iter()
            .map(crate::grid::dealias)
            .collect();
        state.velocity = VelocityField::new(comps)?;
    }

    let threshold = cfg
        .blowup_norm_threshold
        .unwrap_or_else(|| BLOWUP_NORM_FACTOR * conserved_energy(&state));
    let k_max = if cfg.dealias_products {
        state.grid().dealias_k_max()
    } else {
        std::f64::consts::PI / state.grid().length() * state.grid().points_per_axis() as f64
    };

    let mut records = Vec::new();
    let mut push_record = |st: &SimulationState,
                           records: &mut Vec<DiagnosticRecord>,
                           observers: &mut [Observer<'_>]| {
        let rec = DiagnosticRecord::measure(st);
        for obs in observers.iter_mut() {
            obs(st, &rec);
        }
        records.push(rec);
    };
    push_record(&state, &mut records, observers);

    let time_eps = 1e-12 * cfg.t_end.max(1.0);
    let mut steps: usize = 0;
    let finish = |reason: TerminationReason,
                  state: SimulationState,
                  records: Vec<DiagnosticRecord>| {
        let estimated_blowup_time = if reason.is_trip() {
            let series: Vec<(f64, f64)> =
                records.iter().map(|r| (r.time, r.sup_grad_u)).collect();
            estimate_blowup_time(&series).ok()
        } else {
            None
        };
        let report = TerminationReport {
            reason,
            t_final: state.time,
            estimated_blowup_time,
        };
        Ok((state, report, records))
    };

    loop {
        let remaining = cfg.t_end - state.time;
        if remaining <= time_eps {
            return finish(TerminationReason::Completed, state, records);
        }

        let mut dt = cfg.dt;
        if cfg.adaptive {
            let speed = state.velocity.max_abs();
            if speed > 0.0 {
                dt = dt.min(cfg.cfl_safety / (speed * k_max));
            }
            if dt < cfg.dt_floor {
                push_record(&state, &mut records, observers);
                return finish(TerminationReason::DtUnderflow, state, records);
            }
        }
        dt = dt.min(remaining);

        let next = match cfg.scheme {
            Scheme::Rk4 => rk4_step(&state, rhs, dt),
            Scheme::Rk2 => rk2_step(&state, rhs, dt),
        };
        state = match next {
            Ok(s) => s,
            Err(Error::NonFinite(_)) => {
                // The pre-step state is the last finite one; it is already
                // recorded or will be via the final record below.
                return finish(TerminationReason::NanDetected, state, records);
            }
            Err(e) => return Err(e),
        };
        steps += 1;

        // Guard on the gradient sup-norm every accepted step.
        let sup_grad = state.velocity.sup_grad()?;
        if !sup_grad.is_finite() {
            return finish(TerminationReason::NanDetected, state, records);
        }
        let due = steps % cfg.sample_stride == 0;
        if sup_grad > threshold {
            push_record(&state, &mut records, observers);
            return finish(TerminationReason::BlowupNorm, state, records);
        }
        if due {
            push_record(&state, &mut records, observers);
        }
    }
}

/// Fit `value(t) ~ c / (T - t)` on the strictly increasing tail of a series
/// by linear regression of `1/value` against `t`; returns the fitted `T`.
pub fn estimate_blowup_time(series: &[(f64, f64)]) -> Result<f64> {
    let no = |msg: &str| Error::NoEstimate(msg.to_string());
    if series.len() < 3 {
        return Err(no("need at least 3 samples"));
    }
    // Longest strictly-increasing, strictly-positive suffix, capped so the
    // fit reflects the near-singular window.
    let mut start = series.len() - 1;
    while start > 0 {
        let (t0, v0) = series[start - 1];
        let (t1, v1) = series[start];
        if v0 > 0.0 && v1 > v0 && t1 > t0 && series.len() - start < 16 {
            start -= 1;
        } else {
            break;
        }
    }
    let window = &series[start..];
    if window.len() < 3 {
        return Err(no("tail of the series is not strictly increasing"));
    }
    let n = window.len() as f64;
    let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
    for &(t, v) in window {
        let y = 1.0 / v;
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    let denom = n * stt - st * st;
    if denom.abs() < 1e-300 {
        return Err(no("degenerate time samples"));
    }
    let slope = (n * sty - st * sy) / denom;
    let intercept = (sy - slope * st) / n;
    if !(slope < 0.0) {
        return Err(no("series does not grow like c/(T - t)"));
    }
    let t_star = -intercept / slope;
    let t_last = window.last().unwrap().0;
    if !t_star.is_finite() || t_star <= t_last {
        return Err(no("fitted blow-up time not beyond the data"));
    }
    Ok(t_star)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::tests::random_band_limited;
    use crate::grid::Grid;
    use crate::state::momentum_from_velocity;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn grid2(n: usize) -> Arc<Grid> {
        Grid::new(2, n, 2.0 * PI).unwrap()
    }

    fn band_limited_velocity(grid: &Arc<Grid>, band: usize, seed: u64) -> VelocityField {
        let comps = (0..grid.dim())
            .map(|i| random_band_limited(grid, band, seed + 100 * i as u64))
            .collect();
        VelocityField::new(comps).unwrap()
    }

    /// dm/dt = -m, diagonal per mode.
    fn linear_decay(s: &SimulationState) -> Result<MomentumField> {
        let m = momentum_from_velocity(&s.velocity, s.alpha)?;
        let comps = m
            .components()
            .iter()
            .map(|c| {
                ScalarField::from_values(
                    c.grid(),
                    c.values().iter().map(|v| -v).collect(),
                )
                .unwrap()
            })
            .collect();
        MomentumField::new(comps, s.alpha)
    }

    #[test]
    fn zero_rhs_only_advances_time() {
        let g = grid2(16);
        let u = band_limited_velocity(&g, 4, 1);
        let s = SimulationState::new(u.clone(), 0.5).unwrap();
        let rhs = |st: &SimulationState| {
            MomentumField::new(
                (0..st.velocity.dim())
                    .map(|_| ScalarField::zeros(st.grid()))
                    .collect(),
                st.alpha,
            )
        };
        let next = rk4_step(&s, &rhs, 0.25).unwrap();
        assert_eq!(next.time, 0.25);
        for i in 0..2 {
            for (a, b) in next
                .velocity
                .component(i)
                .values()
                .iter()
                .zip(u.component(i).values())
            {
                assert_abs_diff_eq!(a, b, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn rk4_matches_exponential_to_fifth_order() {
        let g = grid2(16);
        let u = band_limited_velocity(&g, 4, 9);
        let s = SimulationState::new(u.clone(), 0.3).unwrap();

        let mut errs = Vec::new();
        for dt in [0.1, 0.05] {
            let next = rk4_step(&s, &linear_decay, dt).unwrap();
            let decay = (-dt).exp();
            let mut err = 0.0_f64;
            for i in 0..2 {
                for (a, b) in next
                    .velocity
                    .component(i)
                    .values()
                    .iter()
                    .zip(u.component(i).values())
                {
                    err = err.max((a - decay * b).abs());
                }
            }
            // Per-mode defect is |exp(-dt) - P4(-dt)| ~ dt^5/120 times the
            // sample amplitude.
            assert!(
                err <= dt.powi(5) / 60.0 * u.max_abs(),
                "dt={dt}: err={err}"
            );
            errs.push(err);
        }
        // Local truncation is O(dt^5): halving dt shrinks it ~32x.
        let ratio = errs[0] / errs[1];
        assert!((24.0..40.0).contains(&ratio), "order ratio {ratio}");
    }

    #[test]
    fn rk4_time_reversal_round_trip() {
        let g = grid2(32);
        let raw = band_limited_velocity(&g, 6, 33);
        let u = raw.scaled(1.0 / raw.max_abs());
        let s = SimulationState::new(u.clone(), 0.8).unwrap();
        let rhs = EpRhs::convective();

        let mut errs = Vec::new();
        for dt in [8e-2, 4e-2] {
            let fwd = rk4_step(&s, &rhs, dt).unwrap();
            let back = rk4_step(&fwd, &rhs, -dt).unwrap();
            let mut err = 0.0_f64;
            for i in 0..2 {
                for (a, b) in back
                    .velocity
                    .component(i)
                    .values()
                    .iter()
                    .zip(u.component(i).values())
                {
                    err = err.max((a - b).abs());
                }
            }
            errs.push(err);
        }
        // The leading O(dt^5) local errors of the two steps cancel in the
        // round trip, leaving an O(dt^6) defect: halving dt shrinks it ~64x.
        assert!(errs[1] <= 1e-5, "round trip error {}", errs[1]);
        let ratio = errs[0] / errs[1];
        assert!(
            (32.0..110.0).contains(&ratio),
            "reversal defect should drop ~64x, got {ratio} ({errs:?})"
        );
    }

    #[test]
    fn integrate_zero_data_completes_unchanged() {
        let g = grid2(16);
        let s = SimulationState::new(VelocityField::zeros(&g), 0.0).unwrap();
        let cfg = IntegratorConfig {
            dt: 0.1,
            t_end: 0.5,
            ..Default::default()
        };
        let (end, report, records) =
            integrate(&s, &cfg, &EpRhs::zero_alpha(), &mut []).unwrap();
        assert_eq!(report.reason, TerminationReason::Completed);
        assert!(report.estimated_blowup_time.is_none());
        assert_eq!(end.velocity.max_abs(), 0.0);
        assert!(records.len() >= 2);
        assert_abs_diff_eq!(end.time, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn integrate_is_deterministic() {
        let g = grid2(16);
        let u = band_limited_velocity(&g, 4, 77);
        let s = SimulationState::new(u, 1.0).unwrap();
        let cfg = IntegratorConfig {
            dt: 0.02,
            t_end: 0.2,
            sample_stride: 3,
            ..Default::default()
        };
        let rhs = EpRhs::convective();
        let (a, _, ra) = integrate(&s, &cfg, &rhs, &mut []).unwrap();
        let (b, _, rb) = integrate(&s, &cfg, &rhs, &mut []).unwrap();
        for i in 0..2 {
            let av = a.velocity.component(i).values();
            let bv = b.velocity.component(i).values();
            assert!(av.iter().zip(bv).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(ra.len(), rb.len());
    }

    #[test]
    fn integrate_invokes_observers_at_stride() {
        let g = grid2(16);
        let u = band_limited_velocity(&g, 4, 5);
        let s = SimulationState::new(u, 0.5).unwrap();
        let cfg = IntegratorConfig {
            dt: 0.05,
            t_end: 0.5, // 10 steps
            sample_stride: 2,
            ..Default::default()
        };
        let mut seen = Vec::new();
        let mut obs = |st: &SimulationState, rec: &DiagnosticRecord| {
            assert!(rec.is_finite());
            seen.push(st.time);
        };
        let (_, report, records) =
            integrate(&s, &cfg, &EpRhs::convective(), &mut [&mut obs]).unwrap();
        assert_eq!(report.reason, TerminationReason::Completed);
        // initial + every 2nd of 10 steps
        assert_eq!(records.len(), 6);
        assert_eq!(seen.len(), records.len());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = IntegratorConfig::default();
        cfg.dt = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = IntegratorConfig::default();
        cfg.dt = 2.0;
        cfg.t_end = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = IntegratorConfig::default();
        cfg.dt_floor = cfg.dt;
        assert!(cfg.validate().is_err());
        let mut cfg = IntegratorConfig::default();
        cfg.cfl_safety = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = IntegratorConfig::default();
        cfg.sample_stride = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn blowup_estimate_from_synthetic_series() {
        // value = 1/(1 - t) sampled on [0, 0.9]
        let series: Vec<(f64, f64)> = (0..10)
            .map(|i| {
                let t = 0.1 * i as f64;
                (t, 1.0 / (1.0 - t))
            })
            .collect();
        let t_star = estimate_blowup_time(&series).unwrap();
        assert_abs_diff_eq!(t_star, 1.0, epsilon = 0.01);

        // value = 2/(0.5 - t)
        let series: Vec<(f64, f64)> = (0..12)
            .map(|i| {
                let t = 0.04 * i as f64;
                (t, 2.0 / (0.5 - t))
            })
            .collect();
        let t_star = estimate_blowup_time(&series).unwrap();
        assert_abs_diff_eq!(t_star, 0.5, epsilon = 0.01);
    }

    #[test]
    fn blowup_estimate_rejects_flat_series() {
        let series: Vec<(f64, f64)> = (0..10).map(|i| (0.1 * i as f64, 2.0)).collect();
        assert!(matches!(
            estimate_blowup_time(&series),
            Err(Error::NoEstimate(_))
        ));
        assert!(estimate_blowup_time(&[(0.0, 1.0), (0.1, 2.0)]).is_err());
    }
}
