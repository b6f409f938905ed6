//! Scripted studies that turn the conservation laws, the symmetric-point
//! blow-up bound, the zero-dispersion convergence rate and the peakon
//! traveling wave into pass/fail numbers. Pass thresholds live in
//! [`crate::tolerances`].

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::diagnostics::{
    divergence_at_origin, error_norm_parts, riccati_bound, DiagnosticRecord,
};
use crate::error::{Error, Result};
use crate::grid::{translate, Grid, ScalarField};
use crate::integrate::{
    integrate, EpRhs, IntegratorConfig, Observer, Scheme, TerminationReason, TerminationReport,
};
use crate::state::{reflect_symmetrize, reflection_asymmetry, SimulationState, VelocityField};
use crate::tolerances::{
    BLOWUP_TRIP_MARGIN, DT_FLOOR_DEFAULT, ENERGY_DRIFT_REL, ENTROPY_DRIFT_REL,
    MOMENTUM_DRIFT_REL, RICCATI_ENVELOPE_TOL, SWEEP_SLOPE_MAX, SWEEP_SLOPE_MIN,
    SYMMETRY_PRESERVATION_REL, WAVE_SHAPE_TOL, WAVE_SPEED_TOL,
};

/// Named initial-data families with their parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    /// `u0 = grad(A cos(k x1) cos(k x2))` (1D: `-A k sin(k x)`), the odd
    /// field with `div u0(0) = -2 A k^2` driving the blow-up study.
    GradientCosine { amplitude: f64 },
    /// Band-limited random field projected onto odd symmetry,
    /// sup-normalized to 1.
    OddRandom { seed: u64, band: usize },
    /// `c * exp(-|x|/sqrt(alpha))` mollified by a Gaussian of width
    /// `smoothing`; 1D only.
    Peakon { speed: f64, smoothing: f64 },
    /// Unidirectional shear `(A g_sigma(x2), 0)` with a periodized Gaussian
    /// profile; 2D only.
    GaussianShear { amplitude: f64, sigma: f64 },
}

impl InitialData {
    pub fn build(&self, grid: &Arc<Grid>, alpha: f64) -> Result<VelocityField> {
        match *self {
            InitialData::GradientCosine { amplitude } => gradient_cosine(grid, amplitude),
            InitialData::OddRandom { seed, band } => Ok(odd_random(grid, seed, band)),
            InitialData::Peakon { speed, smoothing } => peakon(grid, speed, alpha, smoothing),
            InitialData::GaussianShear { amplitude, sigma } => {
                gaussian_shear(grid, amplitude, sigma)
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            InitialData::GradientCosine { .. } => "gradient_cosine",
            InitialData::OddRandom { .. } => "odd_random",
            InitialData::Peakon { .. } => "peakon",
            InitialData::GaussianShear { .. } => "gaussian_shear",
        }
    }
}

/// Declarative description of one experiment run (or sweep).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub dim: usize,
    pub points: usize,
    pub length: f64,
    /// One entry for a single run, several for a sweep.
    pub alphas: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub adaptive: bool,
    pub cfl_safety: f64,
    pub dealias: bool,
    pub dt_floor: f64,
    pub blowup_threshold: Option<f64>,
    pub initial: InitialData,
    pub output_dir: String,
    pub sample_stride: usize,
    /// Recorded for reproducibility; overrides the `OddRandom` seed when set.
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidExperiment(msg));
        if self.name.is_empty() {
            return bad("name must not be empty".into());
        }
        if !(1..=2).contains(&self.dim) {
            return bad(format!("dim must be 1 or 2, got {}", self.dim));
        }
        if self.points < 8 || !self.points.is_power_of_two() {
            return bad(format!(
                "points must be a power of two >= 8, got {}",
                self.points
            ));
        }
        if !(self.length > 0.0) {
            return bad(format!("length must be positive, got {}", self.length));
        }
        if self.alphas.is_empty() {
            return bad("alpha must have at least one value".into());
        }
        if self.alphas.iter().any(|a| *a < 0.0 || !a.is_finite()) {
            return bad(format!("alpha values must be >= 0, got {:?}", self.alphas));
        }
        if !(self.t_end > 0.0) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if !(self.dt > 0.0) || self.dt > self.t_end {
            return bad(format!(
                "need 0 < dt <= t_end, got dt = {}, t_end = {}",
                self.dt, self.t_end
            ));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            ));
        }
        if self.sample_stride == 0 {
            return bad("sample_stride must be at least 1".into());
        }
        match self.initial {
            InitialData::Peakon { .. } if self.dim != 1 => {
                return bad("peakon initial data requires dim = 1".into());
            }
            InitialData::GaussianShear { .. } if self.dim != 2 => {
                return bad("gaussian_shear initial data requires dim = 2".into());
            }
            InitialData::Peakon { smoothing, .. } if !(smoothing > 0.0) => {
                return bad("peakon smoothing must be positive".into());
            }
            InitialData::GaussianShear { sigma, .. } if !(sigma > 0.0) => {
                return bad("gaussian_shear sigma must be positive".into());
            }
            InitialData::OddRandom { band, .. } if band == 0 => {
                return bad("odd_random band must be at least 1".into());
            }
            _ => {}
        }
        Ok(())
    }

    /// Single-alpha accessor for non-sweep experiments.
    pub fn single_alpha(&self) -> Result<f64> {
        if self.alphas.len() != 1 {
            return Err(Error::InvalidExperiment(format!(
                "expected a single alpha, got {:?}",
                self.alphas
            )));
        }
        Ok(self.alphas[0])
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        Grid::new(self.dim, self.points, self.length)
    }

    /// The initial data with the configured seed override applied.
    pub fn initial_velocity(&self, grid: &Arc<Grid>, alpha: f64) -> Result<VelocityField> {
        let mut initial = self.initial.clone();
        if let (Some(seed), InitialData::OddRandom { seed: s, .. }) = (self.seed, &mut initial) {
            *s = seed;
        }
        initial.build(grid, alpha)
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        IntegratorConfig {
            dt: self.dt,
            scheme: self.scheme,
            t_end: self.t_end,
            cfl_safety: self.cfl_safety,
            adaptive: self.adaptive,
            blowup_norm_threshold: self.blowup_threshold,
            dt_floor: self.dt_floor,
            dealias_products: self.dealias,
            sample_stride: self.sample_stride,
        }
    }

    /// Copy with a different resolution, for refinement studies.
    pub fn with_points(&self, points: usize) -> ExperimentConfig {
        ExperimentConfig {
            points,
            ..self.clone()
        }
    }

    /// Baseline config with the documented defaults.
    pub fn defaults(name: &str, dim: usize, initial: InitialData) -> ExperimentConfig {
        ExperimentConfig {
            name: name.to_string(),
            dim,
            points: 64,
            length: 2.0 * PI,
            alphas: vec![1.0],
            t_end: 1.0,
            dt: 1e-3,
            scheme: Scheme::Rk4,
            adaptive: false,
            cfl_safety: 0.5,
            dealias: true,
            dt_floor: DT_FLOOR_DEFAULT,
            blowup_threshold: None,
            initial,
            output_dir: "out".to_string(),
            sample_stride: 10,
            seed: None,
        }
    }
}

// ---- Initial data builders ------------------------------------------------

/// `u0 = grad(A cos(k x1) cos(k x2))` with `k = 2 pi / L`; odd under
/// `x -> -x` with `div u0(0) = -2 A k^2` (1D: `-A k^2`).
pub fn gradient_cosine(grid: &Arc<Grid>, amplitude: f64) -> Result<VelocityField> {
    let k = 2.0 * PI / grid.length();
    match grid.dim() {
        1 => Ok(VelocityField::from_fn(grid, |_, x| {
            -amplitude * k * (k * x[0]).sin()
        })),
        _ => Ok(VelocityField::from_fn(grid, |i, x| {
            if i == 0 {
                -amplitude * k * (k * x[0]).sin() * (k * x[1]).cos()
            } else {
                -amplitude * k * (k * x[0]).cos() * (k * x[1]).sin()
            }
        })),
    }
}

/// Band-limited random field with per-axis modes up to `band`, built from
/// seeded white noise projected onto the band; deterministic per seed.
pub fn band_limited_random(grid: &Arc<Grid>, band: usize, seed: u64) -> ScalarField {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let f = ScalarField::from_values(grid, noise).expect("sized");
    let n = grid.points_per_axis();
    let band = band.min(n / 2 - 1);
    let mut spec = f.spectrum();
    let keep = |j: usize| -> bool {
        let m = if j < n / 2 { j } else { n - j };
        m <= band
    };
    match grid.dim() {
        1 => {
            for (j, c) in spec.coeffs.iter_mut().enumerate() {
                if !keep(j) {
                    *c = num_complex::Complex::new(0.0, 0.0);
                }
            }
        }
        _ => {
            for (flat, c) in spec.coeffs.iter_mut().enumerate() {
                if !keep(flat / n) || !keep(flat % n) {
                    *c = num_complex::Complex::new(0.0, 0.0);
                }
            }
        }
    }
    spec.into_field()
}

/// Odd band-limited random velocity, sup-normalized to 1.
pub fn odd_random(grid: &Arc<Grid>, seed: u64, band: usize) -> VelocityField {
    let comps = (0..grid.dim())
        .map(|i| band_limited_random(grid, band, seed.wrapping_add(1 + i as u64)))
        .collect::<Vec<_>>();
    let raw = VelocityField::new(comps).expect("same grid");
    let odd = reflect_symmetrize(&raw);
    let sup = odd.max_abs();
    if sup > 0.0 {
        odd.scaled(1.0 / sup)
    } else {
        odd
    }
}

/// Periodized Gaussian shear `(A g_sigma(x2), 0)`; carries nonzero mean
/// momentum in the first component.
pub fn gaussian_shear(grid: &Arc<Grid>, amplitude: f64, sigma: f64) -> Result<VelocityField> {
    if grid.dim() != 2 {
        return Err(Error::InvalidExperiment(
            "gaussian_shear requires a 2D grid".into(),
        ));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidExperiment("sigma must be positive".into()));
    }
    let l = grid.length();
    let wraps = (8.0 * sigma / l).ceil() as i64 + 2;
    let profile = move |x: f64| -> f64 {
        let mut g = 0.0;
        for p in -wraps..=wraps {
            let y = x + p as f64 * l;
            g += (-(y * y) / (2.0 * sigma * sigma)).exp();
        }
        g
    };
    Ok(VelocityField::from_fn(grid, |i, x| {
        if i == 0 {
            amplitude * profile(x[1])
        } else {
            0.0
        }
    }))
}

/// Peakon profile `c * exp(-dist(x, 0)/sqrt(alpha))` on the torus, mollified
/// by a Gaussian of width `smoothing` to tame the slope discontinuity.
pub fn peakon(grid: &Arc<Grid>, speed: f64, alpha: f64, smoothing: f64) -> Result<VelocityField> {
    if grid.dim() != 1 {
        return Err(Error::InvalidExperiment("peakon requires a 1D grid".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidExperiment(
            "peakon width sqrt(alpha) requires alpha > 0".into(),
        ));
    }
    let l = grid.length();
    let width = alpha.sqrt();
    let raw = ScalarField::from_fn(grid, |x| {
        let dist = x[0].abs().min(l - x[0].abs());
        speed * (-dist / width).exp()
    });
    let mut spec = raw.spectrum();
    let k = grid.wavenumbers();
    let n = grid.points_per_axis();
    for (j, c) in spec.coeffs.iter_mut().enumerate() {
        let _ = n;
        *c *= (-0.5 * (k[j] * smoothing).powi(2)).exp();
    }
    VelocityField::new(vec![spec.into_field()])
}

// ---- Conservation suite ---------------------------------------------------

#[derive(Debug, Clone)]
pub struct ConservationReport {
    pub report: TerminationReport,
    pub records: Vec<DiagnosticRecord>,
    /// Worst relative drift of the momentum integral over the run.
    pub momentum_drift_rel: f64,
    /// Worst relative drift of Int(|u|^2 + alpha |grad u|^2).
    pub energy_drift_rel: f64,
    /// Worst relative drift of Int |u|^2 (the alpha = 0 entropy).
    pub entropy_drift_rel: f64,
    pub pass: bool,
}

/// Integrate smooth data and bound the drift of both conserved integrals
/// (momentum and energy; at alpha = 0 the entropy stands in for the energy).
pub fn run_conservation_suite(cfg: &ExperimentConfig) -> Result<ConservationReport> {
    cfg.validate()?;
    let alpha = cfg.single_alpha()?;
    let grid = cfg.grid()?;
    let u0 = cfg.initial_velocity(&grid, alpha)?;
    let s0 = SimulationState::new(u0, alpha)?;
    let rhs = if alpha == 0.0 {
        EpRhs {
            form: crate::integrate::RhsForm::ZeroAlpha,
            dealias: cfg.dealias,
        }
    } else {
        EpRhs {
            form: crate::integrate::RhsForm::Convective,
            dealias: cfg.dealias,
        }
    };
    let (_, report, records) = integrate(&s0, &cfg.integrator_config(), &rhs, &mut [])?;

    let first = &records[0];
    // |Int m| can vanish for odd data; fall back to the Cauchy-Schwarz
    // bound |u0|_L2 * sqrt(vol) as the momentum scale.
    let mom_scale = first
        .momentum_integral
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(first.entropy_l2.sqrt() * grid.volume().sqrt())
        .max(1e-300);
    let energy_scale = first.energy.max(1e-300);
    let entropy_scale = first.entropy_l2.max(1e-300);

    let mut momentum_drift_rel = 0.0_f64;
    let mut energy_drift_rel = 0.0_f64;
    let mut entropy_drift_rel = 0.0_f64;
    for rec in &records {
        for (a, b) in rec.momentum_integral.iter().zip(&first.momentum_integral) {
            momentum_drift_rel = momentum_drift_rel.max((a - b).abs() / mom_scale);
        }
        energy_drift_rel = energy_drift_rel.max((rec.energy - first.energy).abs() / energy_scale);
        entropy_drift_rel =
            entropy_drift_rel.max((rec.entropy_l2 - first.entropy_l2).abs() / entropy_scale);
    }

    let pass = report.reason == TerminationReason::Completed
        && momentum_drift_rel <= MOMENTUM_DRIFT_REL
        && (alpha == 0.0 || energy_drift_rel <= ENERGY_DRIFT_REL)
        && entropy_drift_rel <= ENTROPY_DRIFT_REL.max(if alpha > 0.0 {
            // Int |u|^2 alone is not conserved at alpha > 0; only the full
            // energy is. Skip the entropy bound there.
            f64::INFINITY
        } else {
            0.0
        });
    Ok(ConservationReport {
        report,
        records,
        momentum_drift_rel,
        energy_drift_rel,
        entropy_drift_rel,
        pass,
    })
}

// ---- Blow-up study ----------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BlowupReport {
    /// Measured `div u0(0)`.
    pub d0: f64,
    pub trip_time: f64,
    pub trip_reason: TerminationReason,
    pub fitted_blowup_time: Option<f64>,
    /// Envelope horizon `1/|d0|`.
    pub horizon: f64,
    /// `(t, div u(0,t), envelope)` samples with the envelope defined.
    pub series: Vec<(f64, f64, f64)>,
    /// Worst value of `div - envelope - tol * (1 + |envelope|)`; negative
    /// when the envelope check holds everywhere.
    pub max_envelope_excess: f64,
    pub envelope_ok: bool,
    /// Worst relative even-part residual observed before the trip.
    pub max_asymmetry_rel: f64,
    pub symmetry_ok: bool,
    pub records: Vec<DiagnosticRecord>,
    pub pass: bool,
}

/// Drive divergence-negative odd data at `alpha = 0` into the guard and
/// check the trip time and the pointwise Riccati envelope.
pub fn run_blowup_study(cfg: &ExperimentConfig) -> Result<BlowupReport> {
    cfg.validate()?;
    let alpha = cfg.single_alpha()?;
    if alpha != 0.0 {
        return Err(Error::InvalidExperiment(
            "blow-up study requires alpha = 0".into(),
        ));
    }
    let grid = cfg.grid()?;
    let u0 = cfg.initial_velocity(&grid, alpha)?;
    let d0 = divergence_at_origin(&u0);
    if !(d0 < 0.0) {
        return Err(Error::InvalidExperiment(format!(
            "blow-up study needs div u0(0) < 0, got {d0}"
        )));
    }
    let horizon = 1.0 / d0.abs();

    let mut asym = Vec::new();
    let mut watch_symmetry = |st: &SimulationState, _rec: &DiagnosticRecord| {
        let sup = st.velocity.max_abs().max(1e-300);
        asym.push(reflection_asymmetry(&st.velocity) / sup);
    };
    let mut icfg = cfg.integrator_config();
    // Observe long enough past the horizon to catch a missed trip.
    icfg.t_end = cfg.t_end.max(2.0 * horizon);
    let rhs = EpRhs {
        form: crate::integrate::RhsForm::ZeroAlpha,
        dealias: cfg.dealias,
    };
    let s0 = SimulationState::new(u0, 0.0)?;
    let mut observers: Vec<Observer<'_>> = vec![&mut watch_symmetry];
    let (_, report, records) = integrate(&s0, &icfg, &rhs, &mut observers)?;

    let tol = RICCATI_ENVELOPE_TOL;
    let mut series = Vec::new();
    let mut max_envelope_excess = f64::NEG_INFINITY;
    for rec in &records {
        if let Ok(bound) = riccati_bound(d0, rec.time) {
            let excess = rec.div_at_origin - bound - tol * (1.0 + bound.abs());
            max_envelope_excess = max_envelope_excess.max(excess);
            series.push((rec.time, rec.div_at_origin, bound));
        }
    }
    let envelope_ok = max_envelope_excess <= 0.0;
    let max_asymmetry_rel = asym.iter().fold(0.0_f64, |m, v| m.max(*v));
    let symmetry_ok = max_asymmetry_rel <= SYMMETRY_PRESERVATION_REL;

    let tripped = report.reason.is_trip();
    let trip_time = report.t_final;
    let pass = tripped
        && trip_time <= BLOWUP_TRIP_MARGIN * horizon
        && envelope_ok
        && symmetry_ok;
    Ok(BlowupReport {
        d0,
        trip_time,
        trip_reason: report.reason,
        fitted_blowup_time: report.estimated_blowup_time,
        horizon,
        series,
        max_envelope_excess,
        envelope_ok,
        max_asymmetry_rel,
        symmetry_ok,
        records,
        pass,
    })
}

// ---- Zero-dispersion sweep --------------------------------------------------

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub alpha: f64,
    pub err_total: f64,
    pub err_l2: f64,
    pub err_grad: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Rows sorted by alpha descending.
    pub rows: Vec<SweepRow>,
    /// Log-log slope of `err_total` against alpha.
    pub fitted_slope: f64,
    pub fit_window: (f64, f64),
    /// Set when any member tripped a guard; rows then cover the survivors.
    pub aborted: bool,
    pub pass: bool,
}

/// Integrate the same initial data at every alpha plus the alpha = 0
/// reference, evaluate the dispersive error functional at `t_end` and fit
/// its decay rate.
pub fn run_alpha_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    if cfg.alphas.iter().any(|a| *a <= 0.0) {
        return Err(Error::InvalidExperiment(
            "sweep alphas must be positive (the reference supplies alpha = 0)".into(),
        ));
    }
    let grid = cfg.grid()?;
    // Identical initial data across all members and the reference.
    let u0 = cfg.initial_velocity(&grid, 0.0)?;
    let icfg = cfg.integrator_config();

    let reference = {
        let s0 = SimulationState::new(u0.clone(), 0.0)?;
        let rhs = EpRhs {
            form: crate::integrate::RhsForm::ZeroAlpha,
            dealias: cfg.dealias,
        };
        let (end, report, _) = integrate(&s0, &icfg, &rhs, &mut [])?;
        if report.reason.is_trip() {
            return Err(Error::InvalidExperiment(format!(
                "alpha = 0 reference tripped ({}) at t = {}; shorten t_end",
                report.reason.as_str(),
                report.t_final
            )));
        }
        end.velocity
    };

    let members: Vec<Result<(f64, Option<SweepRow>)>> = cfg
        .alphas
        .par_iter()
        .map(|&alpha| {
            let s0 = SimulationState::new(u0.clone(), alpha)?;
            let rhs = EpRhs {
                form: crate::integrate::RhsForm::Convective,
                dealias: cfg.dealias,
            };
            let (end, report, _) = integrate(&s0, &icfg, &rhs, &mut [])?;
            if report.reason.is_trip() {
                return Ok((alpha, None));
            }
            let (err_l2, err_grad) = error_norm_parts(&end.velocity, &reference)?;
            Ok((
                alpha,
                Some(SweepRow {
                    alpha,
                    err_total: err_l2 + alpha.sqrt() * err_grad,
                    err_l2,
                    err_grad,
                }),
            ))
        })
        .collect();

    let mut rows = Vec::new();
    let mut aborted = false;
    for member in members {
        match member? {
            (_, Some(row)) => rows.push(row),
            (_, None) => aborted = true,
        }
    }
    rows.sort_by(|a, b| b.alpha.partial_cmp(&a.alpha).unwrap());

    let fitted_slope = if rows.len() >= 2 {
        log_log_slope(
            &rows.iter().map(|r| (r.alpha, r.err_total)).collect::<Vec<_>>(),
        )
    } else {
        f64::NAN
    };
    let fit_window = (
        rows.last().map(|r| r.alpha).unwrap_or(f64::NAN),
        rows.first().map(|r| r.alpha).unwrap_or(f64::NAN),
    );
    let pass = !aborted
        && rows.len() == cfg.alphas.len()
        && fitted_slope >= SWEEP_SLOPE_MIN
        && fitted_slope <= SWEEP_SLOPE_MAX;
    Ok(SweepResult {
        rows,
        fitted_slope,
        fit_window,
        aborted,
        pass,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let lx = x.ln();
        let ly = y.ln();
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

// ---- Traveling wave ---------------------------------------------------------

#[derive(Debug, Clone)]
pub struct WaveReport {
    pub nominal_speed: f64,
    pub measured_speed: f64,
    pub speed_error_rel: f64,
    /// `|u(. + c t, t) - u0|_L2 / |u0|_L2` with the nominal shift `c t`.
    pub shape_error_rel: f64,
    /// Same, with the measured peak displacement instead of `c t`.
    pub shape_error_aligned: f64,
    pub peak_track: Vec<(f64, f64)>,
    pub report: TerminationReport,
    pub pass: bool,
}

/// Fraction of the run treated as mollification transient and excluded from
/// the speed fit.
const WAVE_FIT_SKIP: f64 = 0.2;

/// Propagate a mollified peakon and measure its speed (via the interpolated
/// argmax trajectory) and L2 shape fidelity.
pub fn run_traveling_wave(cfg: &ExperimentConfig) -> Result<WaveReport> {
    cfg.validate()?;
    let alpha = cfg.single_alpha()?;
    if cfg.dim != 1 {
        return Err(Error::InvalidExperiment(
            "traveling-wave study requires dim = 1".into(),
        ));
    }
    let speed = match cfg.initial {
        InitialData::Peakon { speed, .. } => speed,
        _ => {
            return Err(Error::InvalidExperiment(
                "traveling-wave study requires peakon initial data".into(),
            ))
        }
    };
    let grid = cfg.grid()?;
    let u0 = cfg.initial_velocity(&grid, alpha)?;
    let u0_norm = u0.l2_norm();

    if u0_norm == 0.0 {
        // speed = 0 peakon is the zero solution; trivially stationary.
        let report = TerminationReport {
            reason: TerminationReason::Completed,
            t_final: cfg.t_end,
            estimated_blowup_time: None,
        };
        return Ok(WaveReport {
            nominal_speed: speed,
            measured_speed: 0.0,
            speed_error_rel: 0.0,
            shape_error_rel: 0.0,
            shape_error_aligned: 0.0,
            peak_track: Vec::new(),
            report,
            pass: true,
        });
    }

    let mut track: Vec<(f64, f64)> = Vec::new();
    let l = grid.length();
    let mut watch_peak = |st: &SimulationState, _rec: &DiagnosticRecord| {
        let raw = interpolated_peak(st.velocity.component(0));
        let unwrapped = match track.last() {
            None => raw,
            Some(&(_, prev)) => {
                // choose the branch of raw + j*L nearest the previous sample
                let mut best = raw;
                let mut gap = (raw - prev).abs();
                for j in [-1.0, 1.0] {
                    let cand = raw + j * l;
                    if (cand - prev).abs() < gap {
                        gap = (cand - prev).abs();
                        best = cand;
                    }
                }
                best
            }
        };
        track.push((st.time, unwrapped));
    };

    let s0 = SimulationState::new(u0.clone(), alpha)?;
    let rhs = EpRhs {
        form: crate::integrate::RhsForm::Convective,
        dealias: cfg.dealias,
    };
    let mut observers: Vec<Observer<'_>> = vec![&mut watch_peak];
    let (end, report, _) = integrate(&s0, &cfg.integrator_config(), &rhs, &mut observers)?;

    // Fit the asymptotic speed past the mollification transient.
    let t_skip = WAVE_FIT_SKIP * cfg.t_end;
    let fit: Vec<(f64, f64)> = track.iter().copied().filter(|(t, _)| *t >= t_skip).collect();
    let measured_speed = if fit.len() >= 2 {
        linear_slope(&fit)
    } else {
        f64::NAN
    };
    let speed_error_rel = (measured_speed - speed).abs() / speed.abs().max(1e-300);

    // Shape error with the nominal shift c * t_end ...
    let t_final = end.time;
    let shifted = translate(end.velocity.component(0), &[speed * t_final]);
    let diff = shifted.add_scaled(u0.component(0), -1.0);
    let shape_error_rel = diff.l2_norm() / u0_norm;
    // ... and with the measured displacement of the peak.
    let displacement = track.last().map(|&(_, p)| p).unwrap_or(0.0)
        - track.first().map(|&(_, p)| p).unwrap_or(0.0);
    let shifted = translate(end.velocity.component(0), &[displacement]);
    let diff = shifted.add_scaled(u0.component(0), -1.0);
    let shape_error_aligned = diff.l2_norm() / u0_norm;

    let pass = report.reason == TerminationReason::Completed
        && speed_error_rel <= WAVE_SPEED_TOL
        && shape_error_rel <= WAVE_SHAPE_TOL;
    Ok(WaveReport {
        nominal_speed: speed,
        measured_speed,
        speed_error_rel,
        shape_error_rel,
        shape_error_aligned,
        peak_track: track,
        report,
        pass,
    })
}

/// Sub-grid peak location by a parabola through the argmax and neighbors.
fn interpolated_peak(f: &ScalarField) -> f64 {
    let v = f.values();
    let n = v.len();
    let (imax, _) = v
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        });
    let grid = f.grid();
    let h = grid.spacing();
    let left = v[(imax + n - 1) % n];
    let right = v[(imax + 1) % n];
    let denom = left - 2.0 * v[imax] + right;
    let delta = if denom.abs() > 1e-300 {
        (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    grid.coordinate(imax) + delta * h
}

fn linear_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn shear_cfg(n: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::defaults(
            "shear",
            2,
            InitialData::GaussianShear {
                amplitude: 1.0,
                sigma: 0.8,
            },
        );
        cfg.points = n;
        cfg
    }

    #[test]
    fn config_validation_catches_bad_fields() {
        let mut cfg = shear_cfg(32);
        cfg.alphas = vec![-1.0];
        assert!(cfg.validate().is_err());

        let mut cfg = shear_cfg(32);
        cfg.points = 20;
        assert!(cfg.validate().is_err());

        let mut cfg = shear_cfg(32);
        cfg.dim = 1; // gaussian_shear needs 2D
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::defaults(
            "wave",
            2,
            InitialData::Peakon {
                speed: 1.0,
                smoothing: 0.05,
            },
        );
        assert!(cfg.validate().is_err()); // peakon needs 1D
        cfg.dim = 1;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn gradient_cosine_matches_divergence_formula() {
        let g = Grid::new(2, 64, 2.0 * PI).unwrap();
        let u = gradient_cosine(&g, 0.5).unwrap();
        assert_abs_diff_eq!(divergence_at_origin(&u), -1.0, epsilon = 1e-12);
        assert!(reflection_asymmetry(&u) < 1e-15);
    }

    #[test]
    fn odd_random_is_odd_normalized_and_reproducible() {
        let g = Grid::new(2, 32, 2.0 * PI).unwrap();
        let a = odd_random(&g, 7, 5);
        let b = odd_random(&g, 7, 5);
        for i in 0..2 {
            assert_eq!(a.component(i).values(), b.component(i).values());
        }
        assert!(reflection_asymmetry(&a) < 1e-14);
        assert_abs_diff_eq!(a.max_abs(), 1.0, epsilon = 1e-12);
        let c = odd_random(&g, 8, 5);
        assert!(c.component(0).values() != a.component(0).values());
    }

    #[test]
    fn peakon_profile_is_peaked_at_origin() {
        let g = Grid::new(1, 512, 40.0).unwrap();
        let u = peakon(&g, 1.0, 1.0, 0.05).unwrap();
        let peak = interpolated_peak(u.component(0));
        assert!(peak.abs() < g.spacing());
        // Mollification barely moves the height.
        assert!((u.max_abs() - 1.0).abs() < 0.05);
    }

    #[test]
    fn conservation_suite_zero_data_passes() {
        let mut cfg = shear_cfg(16);
        cfg.initial = InitialData::GaussianShear {
            amplitude: 0.0,
            sigma: 0.5,
        };
        cfg.t_end = 0.05;
        cfg.dt = 0.01;
        let rep = run_conservation_suite(&cfg).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.momentum_drift_rel, 0.0);
    }

    #[test]
    fn conservation_suite_small_run_passes() {
        let mut cfg = shear_cfg(32);
        cfg.t_end = 0.1;
        cfg.dt = 2e-3;
        let rep = run_conservation_suite(&cfg).unwrap();
        assert!(
            rep.pass,
            "momentum {} energy {}",
            rep.momentum_drift_rel, rep.energy_drift_rel
        );
        assert!(rep.momentum_drift_rel <= MOMENTUM_DRIFT_REL);
        assert!(rep.energy_drift_rel <= ENERGY_DRIFT_REL);
    }

    #[test]
    fn blowup_study_small_grid() {
        let mut cfg = ExperimentConfig::defaults(
            "blowup",
            2,
            InitialData::GradientCosine { amplitude: 1.0 },
        );
        cfg.points = 64;
        cfg.alphas = vec![0.0];
        cfg.adaptive = true;
        cfg.dt = 5e-3;
        cfg.t_end = 1.0; // horizon is 0.5 at A = 1
        cfg.sample_stride = 5;
        let rep = run_blowup_study(&cfg).unwrap();
        assert_abs_diff_eq!(rep.d0, -2.0, epsilon = 1e-12);
        assert!(rep.trip_reason.is_trip(), "no trip: {:?}", rep.trip_reason);
        assert!(
            rep.trip_time <= BLOWUP_TRIP_MARGIN * rep.horizon,
            "trip at {} vs horizon {}",
            rep.trip_time,
            rep.horizon
        );
        assert!(rep.envelope_ok, "excess {}", rep.max_envelope_excess);
        assert!(rep.symmetry_ok, "asymmetry {}", rep.max_asymmetry_rel);
        assert!(rep.pass);
    }

    #[test]
    fn blowup_study_rejects_positive_alpha_or_even_data() {
        let mut cfg = ExperimentConfig::defaults(
            "blowup",
            2,
            InitialData::GradientCosine { amplitude: 1.0 },
        );
        cfg.alphas = vec![0.5];
        assert!(run_blowup_study(&cfg).is_err());

        let mut cfg = ExperimentConfig::defaults(
            "blowup",
            2,
            InitialData::GradientCosine { amplitude: -1.0 },
        );
        cfg.alphas = vec![0.0];
        // A < 0 gives div u0(0) = +2 > 0: hypothesis violated.
        assert!(run_blowup_study(&cfg).is_err());
    }

    #[test]
    fn mini_alpha_sweep_errors_decrease() {
        let mut cfg = shear_cfg(32);
        cfg.alphas = vec![0.1, 0.01];
        cfg.t_end = 0.1;
        cfg.dt = 2e-3;
        let sweep = run_alpha_sweep(&cfg).unwrap();
        assert!(!sweep.aborted);
        assert_eq!(sweep.rows.len(), 2);
        assert!(sweep.rows[0].alpha > sweep.rows[1].alpha);
        assert!(sweep.rows[0].err_total > sweep.rows[1].err_total);
        assert!(sweep.fitted_slope > 0.5, "slope {}", sweep.fitted_slope);
    }

    #[test]
    fn sweep_is_reproducible_bitwise() {
        let mut cfg = shear_cfg(16);
        cfg.alphas = vec![0.1, 0.03];
        cfg.t_end = 0.04;
        cfg.dt = 4e-3;
        let a = run_alpha_sweep(&cfg).unwrap();
        let b = run_alpha_sweep(&cfg).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(x.err_total.to_bits(), y.err_total.to_bits());
        }
    }

    #[test]
    fn traveling_wave_zero_speed_is_trivially_stationary() {
        let mut cfg = ExperimentConfig::defaults(
            "wave",
            1,
            InitialData::Peakon {
                speed: 0.0,
                smoothing: 0.05,
            },
        );
        cfg.points = 256;
        cfg.length = 40.0;
        cfg.t_end = 0.5;
        cfg.dt = 0.01;
        let rep = run_traveling_wave(&cfg).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.shape_error_rel, 0.0);
    }

    #[test]
    fn traveling_wave_requires_peakon_in_1d() {
        let cfg = shear_cfg(32);
        assert!(run_traveling_wave(&cfg).is_err());
    }
}
