//! Measurable quantities tracked along trajectories: conserved integrals,
//! the deformation tensor and its dyadic-shell sup-norm monitor, the
//! divergence at the reflection-invariant point with its Riccati envelope,
//! the zero-dispersion error functional and truncation field, weak-form
//! residuals and the trace functional.
//!
//! All quadrature is torus mean times volume, spectrally exact for
//! band-limited integrands.

use crate::error::{Error, Result};
use crate::grid::{laplacian, partial_derivative, shell_range, ScalarField};
use crate::state::{SimulationState, VelocityField};

/// Time-stamped row of conserved quantities, norms and monitor values.
#[derive(Debug, Clone)]
pub struct DiagnosticRecord {
    pub time: f64,
    /// Componentwise integral of the momentum.
    pub momentum_integral: Vec<f64>,
    /// Int(|u|^2 + alpha |grad u|^2) dx.
    pub energy: f64,
    /// Int |u|^2 dx, the conserved entropy of the zero-dispersion system.
    pub entropy_l2: f64,
    /// Sup norm of the velocity gradient.
    pub sup_grad_u: f64,
    /// Dyadic-shell sup-norm monitor of the deformation tensor.
    pub besov_proxy_s: f64,
    /// (div u)(0).
    pub div_at_origin: f64,
    pub max_abs_u: f64,
}

impl DiagnosticRecord {
    /// Measure every tracked quantity on a snapshot.
    pub fn measure(s: &SimulationState) -> DiagnosticRecord {
        let u = &s.velocity;
        let grad = u.gradient().expect("axes in range");
        let sup_grad_u = grad.iter().fold(0.0_f64, |m, g| m.max(g.max_abs()));
        let deformation = deformation_from_gradient(u, &grad);
        DiagnosticRecord {
            time: s.time,
            momentum_integral: conserved_momentum(s),
            energy: energy_from_gradient(u, &grad, s.alpha),
            entropy_l2: u
                .components()
                .iter()
                .map(|c| c.l2_norm().powi(2))
                .sum::<f64>(),
            sup_grad_u,
            besov_proxy_s: besov_proxy(&deformation),
            div_at_origin: div_origin_from_gradient(u, &grad),
            max_abs_u: u.max_abs(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.momentum_integral.iter().all(|v| v.is_finite())
            && [
                self.time,
                self.energy,
                self.entropy_l2,
                self.sup_grad_u,
                self.besov_proxy_s,
                self.div_at_origin,
                self.max_abs_u,
            ]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Componentwise quadrature of the momentum, `Int m dx`.
pub fn conserved_momentum(s: &SimulationState) -> Vec<f64> {
    s.momentum()
        .components()
        .iter()
        .map(|c| c.integral())
        .collect()
}

/// `Int (|u|^2 + alpha |grad u|^2) dx`.
pub fn conserved_energy(s: &SimulationState) -> f64 {
    let grad = s.velocity.gradient().expect("axes in range");
    energy_from_gradient(&s.velocity, &grad, s.alpha)
}

fn energy_from_gradient(u: &VelocityField, grad: &[ScalarField], alpha: f64) -> f64 {
    let mut e: f64 = u.components().iter().map(|c| c.l2_norm().powi(2)).sum();
    if alpha > 0.0 {
        e += alpha * grad.iter().map(|g| g.l2_norm().powi(2)).sum::<f64>();
    }
    e
}

/// Symmetric d x d field tensor, upper triangle stored row-wise.
#[derive(Debug, Clone)]
pub struct SymmetricTensorField {
    dim: usize,
    comps: Vec<ScalarField>,
}

impl SymmetricTensorField {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> &ScalarField {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        // row a starts after a rows of shrinking length d, d-1, ...
        let off = a * self.dim - a * (a + 1) / 2 + a;
        &self.comps[off + (b - a)]
    }

    /// Unique components (i <= j), row-wise.
    pub fn unique_components(&self) -> &[ScalarField] {
        &self.comps
    }

    /// Pointwise sum of squares over the full tensor (off-diagonals twice).
    pub fn frobenius_sq_at(&self, p: usize) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let v = self.get(i, j).values()[p];
                s += v * v;
            }
        }
        s
    }
}

/// Deformation tensor `S_ij = (d_i u_j + d_j u_i) / 2`.
pub fn deformation_tensor(u: &VelocityField) -> SymmetricTensorField {
    let grad = u.gradient().expect("axes in range");
    deformation_from_gradient(u, &grad)
}

fn deformation_from_gradient(u: &VelocityField, grad: &[ScalarField]) -> SymmetricTensorField {
    let d = u.dim();
    let g = |i: usize, j: usize| grad[i * d + j].values(); // d_j u_i
    let mut comps = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            let values = (0..u.grid().len())
                .map(|p| 0.5 * (g(j, i)[p] + g(i, j)[p]))
                .collect();
            comps.push(ScalarField::from_values(u.grid(), values).expect("sized"));
        }
    }
    SymmetricTensorField { dim: d, comps }
}

/// Sharp-cutoff realization of the dyadic-shell sup-norm:
/// `max_m max_ij |shell_filter(S_ij, m)|_inf` over nonempty shells. This is a
/// monitor built from sharp spectral projections, not a norm-equivalent of
/// the smooth-partition Besov norm.
pub fn besov_proxy(s: &SymmetricTensorField) -> f64 {
    let mut worst = 0.0_f64;
    for comp in s.unique_components() {
        let grid = comp.grid().clone();
        let spec = comp.spectrum();
        for m in shell_range(&grid) {
            let mut shell = spec.clone();
            shell.shell_in_place(m);
            worst = worst.max(shell.into_field().max_abs());
        }
    }
    worst
}

/// Divergence field `div u = sum_i d_i u_i`.
pub fn divergence(u: &VelocityField) -> ScalarField {
    let d = u.dim();
    let mut div = partial_derivative(u.component(0), 0).expect("axis 0");
    for i in 1..d {
        let di = partial_derivative(u.component(i), i).expect("axis in range");
        div = div.add_scaled(&di, 1.0);
    }
    div
}

/// `(div u)(0)` sampled at the reflection-invariant node.
pub fn divergence_at_origin(u: &VelocityField) -> f64 {
    divergence(u).values()[u.grid().origin_index()]
}

fn div_origin_from_gradient(u: &VelocityField, grad: &[ScalarField]) -> f64 {
    let d = u.dim();
    let origin = u.grid().origin_index();
    (0..d).map(|i| grad[i * d + i].values()[origin]).sum()
}

/// Riccati envelope `d0 / (1 + d0 * t)` for `d0 < 0`; valid for
/// `t < 1/|d0|`, after which the envelope has blown up.
pub fn riccati_bound(d0: f64, t: f64) -> Result<f64> {
    if !(d0 < 0.0) {
        return Err(Error::NonNegativeD0(d0));
    }
    let horizon = 1.0 / d0.abs();
    if t >= horizon {
        return Err(Error::EnvelopeBlownUp { t, horizon });
    }
    Ok(d0 / (1.0 + d0 * t))
}

/// Pointwise residual of the divergence evolution identity for the
/// zero-dispersion system:
/// `div(du/dt) + u.grad(div u) + 2 sum S_ij^2 + sum_j (Lap u_j) u_j
///  + (div u)^2 + sum_ij (d_i d_j u_i) u_j`.
/// Vanishes to spectral tolerance when `du_dt` comes from the
/// zero-dispersion operator on well-resolved fields.
pub fn divergence_evolution_residual(
    u: &VelocityField,
    du_dt: &VelocityField,
) -> Result<ScalarField> {
    if u.grid().as_ref() != du_dt.grid().as_ref() {
        return Err(Error::GridMismatch);
    }
    let grid = u.grid().clone();
    let d = u.dim();
    let div_u = divergence(u);
    let div_dudt = divergence(du_dt);
    let grad_div: Vec<ScalarField> = (0..d)
        .map(|j| partial_derivative(&div_u, j).expect("axis in range"))
        .collect();
    let s = deformation_tensor(u);
    let lap: Vec<ScalarField> = (0..d).map(|j| laplacian(u.component(j))).collect();

    let values = (0..grid.len())
        .map(|p| {
            let mut r = div_dudt.values()[p];
            // u.grad(div u) plus sum_ij (d_i d_j u_i) u_j; mixed partials
            // commute spectrally so both terms reduce to u_j d_j(div u).
            for j in 0..d {
                r += 2.0 * u.component(j).values()[p] * grad_div[j].values()[p];
            }
            r += 2.0 * s.frobenius_sq_at(p);
            for j in 0..d {
                r += lap[j].values()[p] * u.component(j).values()[p];
            }
            r += div_u.values()[p].powi(2);
            r
        })
        .collect();
    ScalarField::from_values(&grid, values)
}

/// The zero-dispersion error functional
/// `|u_alpha - u_limit|_L2 + sqrt(alpha) |grad(u_alpha - u_limit)|_L2`.
pub fn error_norm(u_alpha: &VelocityField, u_limit: &VelocityField, alpha: f64) -> Result<f64> {
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::NegativeAlpha(alpha));
    }
    let (l2, grad) = error_norm_parts(u_alpha, u_limit)?;
    Ok(l2 + alpha.sqrt() * grad)
}

/// The two ingredients of [`error_norm`]: `(|diff|_L2, |grad diff|_L2)`.
pub fn error_norm_parts(u_alpha: &VelocityField, u_limit: &VelocityField) -> Result<(f64, f64)> {
    if u_alpha.grid().as_ref() != u_limit.grid().as_ref() {
        return Err(Error::GridMismatch);
    }
    let diff = u_alpha.add_scaled(u_limit, -1.0);
    let l2 = diff.l2_norm();
    let grad = diff
        .gradient()?
        .iter()
        .map(|g| g.l2_norm().powi(2))
        .sum::<f64>()
        .sqrt();
    Ok((l2, grad))
}

/// The dispersive truncation field
/// `-alpha * (Lap du/dt + div(u (x) Lap u) + (grad u)^T Lap u)`,
/// where `du_dt` is the zero-dispersion tendency. Exactly linear in alpha.
pub fn dispersion_truncation(
    u: &VelocityField,
    du_dt: &VelocityField,
    alpha: f64,
) -> Result<VelocityField> {
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::NegativeAlpha(alpha));
    }
    if u.grid().as_ref() != du_dt.grid().as_ref() {
        return Err(Error::GridMismatch);
    }
    let grid = u.grid().clone();
    let d = u.dim();
    let lap_u: Vec<ScalarField> = (0..d).map(|i| laplacian(u.component(i))).collect();
    let lap_dudt: Vec<ScalarField> = (0..d).map(|i| laplacian(du_dt.component(i))).collect();
    let grad = u.gradient()?; // grad[i*d+j] = d_j u_i

    let mut components = Vec::with_capacity(d);
    for i in 0..d {
        // div(u (x) Lap u)_i = sum_j d_j (u_j * Lap u_i)
        let mut div_outer = ScalarField::zeros(&grid);
        for j in 0..d {
            let prod = {
                let uj = u.component(j).values();
                let li = lap_u[i].values();
                let vals = (0..grid.len()).map(|p| uj[p] * li[p]).collect();
                ScalarField::from_values(&grid, vals)?
            };
            div_outer = div_outer.add_scaled(&partial_derivative(&prod, j)?, 1.0);
        }
        let values = (0..grid.len())
            .map(|p| {
                let mut t = lap_dudt[i].values()[p] + div_outer.values()[p];
                // ((grad u)^T Lap u)_i = sum_j (d_i u_j) Lap u_j
                for j in 0..d {
                    t += grad[j * d + i].values()[p] * lap_u[j].values()[p];
                }
                -alpha * t
            })
            .collect();
        components.push(ScalarField::from_values(&grid, values)?);
    }
    VelocityField::new(components)
}

/// Stationary weak-form functional: pairs the stress terms against a
/// band-limited test field by quadrature,
/// `sum_j Int {u_i u_j + alpha grad u_i . grad u_j} d_j phi_i
///  + alpha sum_j Int u_j grad u_i . grad d_j phi_i
///  + sum_j Int {delta_ij |u|^2/2 - alpha d_i u . d_j u
///               + alpha delta_ij |grad u|^2/2} d_j phi_i`,
/// summed over i. Zero for stationary weak solutions.
pub fn weak_residual_stationary(
    u: &VelocityField,
    alpha: f64,
    test_fn: &VelocityField,
) -> Result<f64> {
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::NegativeAlpha(alpha));
    }
    if u.grid().as_ref() != test_fn.grid().as_ref() {
        return Err(Error::GridMismatch);
    }
    let grid = u.grid().clone();
    let d = u.dim();
    let npts = grid.len();
    let gu = u.gradient()?; // gu[i*d+j] = d_j u_i
    let gphi = test_fn.gradient()?; // gphi[i*d+j] = d_j phi_i

    let mut integrand = vec![0.0_f64; npts];
    for i in 0..d {
        for j in 0..d {
            let dj_phi_i = gphi[i * d + j].values();
            let ui = u.component(i).values();
            let uj = u.component(j).values();
            for p in 0..npts {
                // u_i u_j + alpha grad u_i . grad u_j - alpha d_i u . d_j u
                let mut t = ui[p] * uj[p];
                if alpha > 0.0 {
                    for k in 0..d {
                        t += alpha * gu[i * d + k].values()[p] * gu[j * d + k].values()[p];
                        t -= alpha * gu[k * d + i].values()[p] * gu[k * d + j].values()[p];
                    }
                }
                if i == j {
                    let mut usq = 0.0;
                    for k in 0..d {
                        usq += u.component(k).values()[p].powi(2);
                    }
                    t += 0.5 * usq;
                    if alpha > 0.0 {
                        let mut gsq = 0.0;
                        for g in gu.iter() {
                            gsq += g.values()[p].powi(2);
                        }
                        t += 0.5 * alpha * gsq;
                    }
                }
                integrand[p] += t * dj_phi_i[p];
            }
            // alpha * u_j (d_k u_i)(d_k d_j phi_i)
            if alpha > 0.0 {
                for k in 0..d {
                    let dkj_phi_i = partial_derivative(&gphi[i * d + j], k)?;
                    let gik = gu[i * d + k].values();
                    for p in 0..npts {
                        integrand[p] += alpha * uj[p] * gik[p] * dkj_phi_i.values()[p];
                    }
                }
            }
        }
    }
    let mean = integrand.iter().sum::<f64>() / npts as f64;
    Ok(mean * grid.volume())
}

/// The trace functional `Int {(N+2)/2 |u|^2 + alpha N/2 |grad u|^2} dx`,
/// strictly positive for nonzero fields; equals `Int tr T^a dx`.
pub fn liouville_trace_functional(u: &VelocityField, alpha: f64) -> Result<f64> {
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::NegativeAlpha(alpha));
    }
    let d = u.dim() as f64;
    let usq: f64 = u.components().iter().map(|c| c.l2_norm().powi(2)).sum();
    let gsq: f64 = u.gradient()?.iter().map(|g| g.l2_norm().powi(2)).sum();
    Ok((d + 2.0) / 2.0 * usq + alpha * d / 2.0 * gsq)
}

/// Quadrature pairing `sum_i Int a_i b_i dx` of two component lists.
pub fn inner_product_l2(a: &[ScalarField], b: &[ScalarField]) -> f64 {
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        let mut s = 0.0;
        for (p, q) in x.values().iter().zip(y.values()) {
            s += p * q;
        }
        total += s / x.values().len() as f64 * x.grid().volume();
    }
    total
}
