//! Periodic tensor-product grid, Fourier transforms, spectral differentiation,
//! Helmholtz multipliers, 2/3-rule dealiasing and dyadic shell filters.
//!
//! The torus spans `[-L/2, L/2)` per axis with `x_i = (i - N/2) * L/N`, so the
//! reflection-invariant point `x = 0` is exactly the node at index `N/2`.
//! Wavenumbers follow the standard FFT ordering `k_n = 2*pi*n/L` with
//! `n = 0, 1, ..., N/2-1, -N/2, ..., -1`. Derivative multipliers zero the
//! Nyquist mode so that real fields stay real under odd derivatives.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Periodic grid shared by all fields of a simulation.
pub struct Grid {
    dim: usize,
    n: usize,
    length: f64,
    /// Per-axis wavenumber table in FFT ordering; entry `N/2` is the Nyquist
    /// wavenumber `-pi*N/L`.
    wavenumbers: Vec<f64>,
    /// Wavenumbers used for odd derivatives: Nyquist entry forced to zero.
    deriv_wavenumbers: Vec<f64>,
    /// Per-axis 2/3-rule keep mask: `|n| <= floor(N/3)`.
    dealias_keep: Vec<bool>,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .field("length", &self.length)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n && self.length == other.length
    }
}

impl Grid {
    /// Build a `dim`-dimensional periodic grid with `n` points per axis on a
    /// torus of period `length`.
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Arc<Grid>> {
        if !(1..=2).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points_per_axis must be a power of two >= 8, got {n}"
            )));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "domain_length must be positive and finite, got {length}"
            )));
        }

        let base = 2.0 * PI / length;
        let mut wavenumbers = Vec::with_capacity(n);
        for j in 0..n {
            let m = if j < n / 2 { j as i64 } else { j as i64 - n as i64 };
            wavenumbers.push(base * m as f64);
        }
        let mut deriv_wavenumbers = wavenumbers.clone();
        deriv_wavenumbers[n / 2] = 0.0;

        let cutoff = n / 3; // floor; N is a power of two so this is strict
        let dealias_keep = (0..n)
            .map(|j| {
                let m = if j < n / 2 { j } else { n - j };
                m <= cutoff
            })
            .collect();

        let mut planner = FftPlanner::new();
        let fft_fwd = planner.plan_fft_forward(n);
        let fft_inv = planner.plan_fft_inverse(n);

        Ok(Arc::new(Grid {
            dim,
            n,
            length,
            wavenumbers,
            deriv_wavenumbers,
            dealias_keep,
            fft_fwd,
            fft_inv,
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    /// Total number of grid points, `N^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// Coordinate of node `index` along any axis; exact zero at `index = N/2`.
    pub fn coordinate(&self, index: usize) -> f64 {
        (index as f64 - (self.n / 2) as f64) * self.spacing()
    }

    /// Per-axis wavenumber table (FFT ordering, Nyquist included).
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Per-axis wavenumber table with the Nyquist mode zeroed.
    pub fn deriv_wavenumbers(&self) -> &[f64] {
        &self.deriv_wavenumbers
    }

    /// Per-axis 2/3-rule keep mask.
    pub fn dealias_keep(&self) -> &[bool] {
        &self.dealias_keep
    }

    /// Largest per-axis mode index kept by the 2/3 rule.
    pub fn dealias_cutoff(&self) -> usize {
        self.n / 3
    }

    /// Largest wavenumber magnitude retained after dealiasing, used by the
    /// CFL heuristic: `(pi/L) * N * 2/3`.
    pub fn dealias_k_max(&self) -> f64 {
        PI / self.length * self.n as f64 * (2.0 / 3.0)
    }

    /// Flat index of the reflection-invariant node `x = 0`.
    pub fn origin_index(&self) -> usize {
        let mid = self.n / 2;
        match self.dim {
            1 => mid,
            _ => mid * self.n + mid,
        }
    }

    /// Decompose a flat index into per-axis indices (row-major, axis 0 slow).
    pub fn axis_indices(&self, flat: usize) -> [usize; 2] {
        match self.dim {
            1 => [flat, 0],
            _ => [flat / self.n, flat % self.n],
        }
    }

    /// Flat index of the reflected node `x -> -x`.
    pub fn reflected_index(&self, flat: usize) -> usize {
        let [i0, i1] = self.axis_indices(flat);
        let r0 = (self.n - i0) % self.n;
        match self.dim {
            1 => r0,
            _ => {
                let r1 = (self.n - i1) % self.n;
                r0 * self.n + r1
            }
        }
    }

    /// Physical position of a flat index; entry 1 is unused in 1D.
    pub fn position(&self, flat: usize) -> [f64; 2] {
        let [i0, i1] = self.axis_indices(flat);
        [self.coordinate(i0), self.coordinate(i1)]
    }

    /// Wavevector of a spectral flat index, Nyquist included.
    pub fn wavevector(&self, flat: usize) -> [f64; 2] {
        let [i0, i1] = self.axis_indices(flat);
        [self.wavenumbers[i0], if self.dim == 2 { self.wavenumbers[i1] } else { 0.0 }]
    }

    // ---- FFT plumbing -------------------------------------------------

    /// Unnormalized forward transform of real samples.
    pub(crate) fn forward(&self, values: &[f64]) -> Vec<Complex<f64>> {
        debug_assert_eq!(values.len(), self.len());
        let mut buf: Vec<Complex<f64>> =
            values.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut buf, true);
        buf
    }

    /// Normalized inverse transform; returns the real parts.
    pub(crate) fn inverse(&self, mut coeffs: Vec<Complex<f64>>) -> Vec<f64> {
        debug_assert_eq!(coeffs.len(), self.len());
        self.transform(&mut coeffs, false);
        let norm = 1.0 / self.len() as f64;
        coeffs.iter().map(|c| c.re * norm).collect()
    }

    fn transform(&self, buf: &mut [Complex<f64>], forward: bool) {
        let fft = if forward { &self.fft_fwd } else { &self.fft_inv };
        let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        match self.dim {
            1 => fft.process_with_scratch(buf, &mut scratch),
            _ => {
                let n = self.n;
                for row in buf.chunks_exact_mut(n) {
                    fft.process_with_scratch(row, &mut scratch);
                }
                transpose_square(buf, n);
                for row in buf.chunks_exact_mut(n) {
                    fft.process_with_scratch(row, &mut scratch);
                }
                transpose_square(buf, n);
            }
        }
    }
}

fn transpose_square(buf: &mut [Complex<f64>], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

/// Real scalar field sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Arc<Grid>) -> ScalarField {
        ScalarField {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: &Arc<Grid>, value: f64) -> ScalarField {
        ScalarField {
            grid: grid.clone(),
            values: vec![value; grid.len()],
        }
    }

    /// Sample `f(position)` at every node.
    pub fn from_fn(grid: &Arc<Grid>, mut f: impl FnMut(&[f64]) -> f64) -> ScalarField {
        let dim = grid.dim();
        let values = (0..grid.len())
            .map(|flat| {
                let pos = grid.position(flat);
                f(&pos[..dim])
            })
            .collect();
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "value buffer has {} entries, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(ScalarField {
            grid: grid.clone(),
            values,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Torus quadrature: mean times volume, spectrally exact for band-limited
    /// integrands.
    pub fn integral(&self) -> f64 {
        self.mean() * self.grid.volume()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn l2_norm(&self) -> f64 {
        let sum_sq: f64 = self.values.iter().map(|v| v * v).sum();
        (sum_sq / self.values.len() as f64 * self.grid.volume()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `self + scale * other`, used by tests and field assembly.
    pub fn add_scaled(&self, other: &ScalarField, scale: f64) -> ScalarField {
        debug_assert!(self.grid.as_ref() == other.grid.as_ref());
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + scale * b)
            .collect();
        ScalarField {
            grid: self.grid.clone(),
            values,
        }
    }

    pub(crate) fn spectrum(&self) -> Spectrum {
        Spectrum {
            grid: self.grid.clone(),
            coeffs: self.grid.forward(&self.values),
        }
    }
}

/// Complex Fourier coefficients of a real field (internal representation).
#[derive(Clone)]
pub(crate) struct Spectrum {
    pub grid: Arc<Grid>,
    pub coeffs: Vec<Complex<f64>>,
}

impl Spectrum {
    pub fn zeros(grid: &Arc<Grid>) -> Spectrum {
        Spectrum {
            grid: grid.clone(),
            coeffs: vec![Complex::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn to_field(&self) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.grid.inverse(self.coeffs.clone()),
        }
    }

    pub fn into_field(self) -> ScalarField {
        ScalarField {
            values: self.grid.inverse(self.coeffs),
            grid: self.grid,
        }
    }

    /// Multiply by `i * k_axis` with the Nyquist mode zeroed.
    pub fn derivative(&self, axis: usize) -> Spectrum {
        let grid = &self.grid;
        let n = grid.points_per_axis();
        let kd = grid.deriv_wavenumbers();
        let mut coeffs = vec![Complex::new(0.0, 0.0); self.coeffs.len()];
        match (grid.dim(), axis) {
            (1, 0) => {
                for (j, (c, out)) in self.coeffs.iter().zip(&mut coeffs).enumerate() {
                    *out = c * Complex::new(0.0, kd[j]);
                }
            }
            (2, a) => {
                for (flat, (c, out)) in self.coeffs.iter().zip(&mut coeffs).enumerate() {
                    let j = if a == 0 { flat / n } else { flat % n };
                    *out = c * Complex::new(0.0, kd[j]);
                }
            }
            _ => unreachable!("axis validated by caller"),
        }
        Spectrum {
            grid: grid.clone(),
            coeffs,
        }
    }

    /// Multiply every mode by a real function of `|k|^2` (Nyquist included).
    pub fn scale_by_k2(&self, f: impl Fn(f64) -> f64) -> Spectrum {
        let grid = &self.grid;
        let n = grid.points_per_axis();
        let k = grid.wavenumbers();
        let coeffs = match grid.dim() {
            1 => self
                .coeffs
                .iter()
                .enumerate()
                .map(|(j, c)| c * f(k[j] * k[j]))
                .collect(),
            _ => self
                .coeffs
                .iter()
                .enumerate()
                .map(|(flat, c)| {
                    let k0 = k[flat / n];
                    let k1 = k[flat % n];
                    c * f(k0 * k0 + k1 * k1)
                })
                .collect(),
        };
        Spectrum {
            grid: grid.clone(),
            coeffs,
        }
    }

    /// Zero every mode outside the per-axis 2/3 keep mask.
    pub fn dealias_in_place(&mut self) {
        let grid = &self.grid;
        let keep = grid.dealias_keep();
        let n = grid.points_per_axis();
        match grid.dim() {
            1 => {
                for (j, c) in self.coeffs.iter_mut().enumerate() {
                    if !keep[j] {
                        *c = Complex::new(0.0, 0.0);
                    }
                }
            }
            _ => {
                for (flat, c) in self.coeffs.iter_mut().enumerate() {
                    if !keep[flat / n] || !keep[flat % n] {
                        *c = Complex::new(0.0, 0.0);
                    }
                }
            }
        }
    }

    pub fn add_scaled_in_place(&mut self, other: &Spectrum, scale: Complex<f64>) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += scale * b;
        }
    }

    /// Keep only the modes of dyadic shell `m`: `2^(m-1) <= |k| < 2^m`.
    pub fn shell_in_place(&mut self, m: i32) {
        let grid = self.grid.clone();
        let n = grid.points_per_axis();
        let k = grid.wavenumbers();
        let lo = (2.0_f64).powi(m - 1);
        let hi = (2.0_f64).powi(m);
        match grid.dim() {
            1 => {
                for (j, c) in self.coeffs.iter_mut().enumerate() {
                    let mag = k[j].abs();
                    if !(lo <= mag && mag < hi) {
                        *c = Complex::new(0.0, 0.0);
                    }
                }
            }
            _ => {
                for (flat, c) in self.coeffs.iter_mut().enumerate() {
                    let k0 = k[flat / n];
                    let k1 = k[flat % n];
                    let mag = (k0 * k0 + k1 * k1).sqrt();
                    if !(lo <= mag && mag < hi) {
                        *c = Complex::new(0.0, 0.0);
                    }
                }
            }
        }
    }

    /// Squared L2 norm computed on the Fourier side (Parseval).
    pub fn l2_norm_sq(&self) -> f64 {
        let total = self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>();
        total * self.grid.volume() / (self.grid.len() as f64).powi(2)
    }
}

// ---- Spec operations ----------------------------------------------------

/// Exact spectral partial derivative along `axis`; Nyquist mode zeroed.
pub fn partial_derivative(f: &ScalarField, axis: usize) -> Result<ScalarField> {
    if axis >= f.grid().dim() {
        return Err(Error::AxisOutOfRange {
            axis,
            dim: f.grid().dim(),
        });
    }
    Ok(f.spectrum().derivative(axis).into_field())
}

/// Apply the Helmholtz operator `1 - alpha * Laplacian`, i.e. the Fourier
/// multiplier `1 + alpha |k|^2`.
pub fn helmholtz_apply(f: &ScalarField, alpha: f64) -> Result<ScalarField> {
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::NegativeAlpha(alpha));
    }
    if alpha == 0.0 {
        return Ok(f.clone());
    }
    Ok(f.spectrum().scale_by_k2(|k2| 1.0 + alpha * k2).into_field())
}

/// Invert the Helmholtz operator; the multiplier `(1 + alpha |k|^2)^-1` lies
/// in `(0, 1]`, so this is always well-posed.
pub fn helmholtz_invert(f: &ScalarField, alpha: f64) -> Result<ScalarField> {
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::NegativeAlpha(alpha));
    }
    if alpha == 0.0 {
        return Ok(f.clone());
    }
    Ok(f
        .spectrum()
        .scale_by_k2(|k2| 1.0 / (1.0 + alpha * k2))
        .into_field())
}

/// Spectral Laplacian with the derivative (Nyquist-zeroed) wavenumbers, so it
/// agrees with composing first derivatives.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let grid = f.grid();
    let n = grid.points_per_axis();
    let kd = grid.deriv_wavenumbers();
    let mut spec = f.spectrum();
    match grid.dim() {
        1 => {
            for (j, c) in spec.coeffs.iter_mut().enumerate() {
                *c *= -kd[j] * kd[j];
            }
        }
        _ => {
            for (flat, c) in spec.coeffs.iter_mut().enumerate() {
                let k0 = kd[flat / n];
                let k1 = kd[flat % n];
                *c *= -(k0 * k0 + k1 * k1);
            }
        }
    }
    spec.into_field()
}

/// 2/3-rule dealiasing projection: modes with any per-axis `|n| > N/3` zeroed.
pub fn dealias(f: &ScalarField) -> ScalarField {
    let mut spec = f.spectrum();
    spec.dealias_in_place();
    spec.into_field()
}

/// Dyadic shell projection: retains exactly the modes with
/// `2^(m-1) <= |k| < 2^m` (sharp cutoff on the wavenumber magnitude).
pub fn shell_filter(f: &ScalarField, m: i32) -> ScalarField {
    let mut spec = f.spectrum();
    spec.shell_in_place(m);
    spec.into_field()
}

/// Exact periodic translation: `translate(f, s)(x) = f(x + s)`, realized as
/// the phase multiplier `exp(i k . s)`. The Nyquist mode is translated with
/// `cos(k_nyq s)` to keep the samples real.
pub fn translate(f: &ScalarField, shift: &[f64]) -> ScalarField {
    let grid = f.grid().clone();
    let n = grid.points_per_axis();
    let k = grid.wavenumbers();
    let nyq = n / 2;
    let mut spec = f.spectrum();
    let phase = |j: usize, s: f64| -> Complex<f64> {
        if j == nyq {
            Complex::new((k[j] * s).cos(), 0.0)
        } else {
            Complex::new(0.0, k[j] * s).exp()
        }
    };
    match grid.dim() {
        1 => {
            for (j, c) in spec.coeffs.iter_mut().enumerate() {
                *c *= phase(j, shift[0]);
            }
        }
        _ => {
            for (flat, c) in spec.coeffs.iter_mut().enumerate() {
                *c *= phase(flat / n, shift[0]) * phase(flat % n, shift[1]);
            }
        }
    }
    spec.into_field()
}

/// Index of the dyadic shell containing wavenumber magnitude `mag`.
pub fn shell_index(mag: f64) -> i32 {
    debug_assert!(mag > 0.0);
    mag.log2().floor() as i32 + 1
}

/// Inclusive range of shell indices that are nonempty on this grid.
pub fn shell_range(grid: &Grid) -> std::ops::RangeInclusive<i32> {
    let k_min = 2.0 * PI / grid.length();
    let k_max = PI * grid.points_per_axis() as f64 / grid.length()
        * (grid.dim() as f64).sqrt();
    shell_index(k_min)..=shell_index(k_max)
}
