//! Evolution operators for the filtered momentum.
//!
//! Three algebraically equivalent right-hand sides are implemented and
//! cross-checked against each other:
//!
//! * the convective form `dm/dt = -(u.grad)m - (grad u)^T m - (div u) m`
//!   with `m = (1 - alpha*Laplacian) u`;
//! * the conservative form `dm_i/dt = -sum_j d_j T_ij` built from the stress
//!   split `T = T^a + T^b`, where
//!   `T^a = u(x)u + alpha*grad(u)grad(u)^T - alpha*grad(u)^T grad(u)
//!          + (|u|^2 + alpha*|grad u|^2)/2 * Id`
//!   and `T^b_ij = -alpha * sum_k d_k(u_j d_k u_i)`;
//! * at `alpha = 0` the symmetric hyperbolic system
//!   `du/dt = -div(u(x)u) - grad(|u|^2)/2`.
//!
//! Products are formed in physical space and derivatives in Fourier space;
//! each quadratic product is dealiased before differentiation so the form
//! equivalence holds to rounding on band-limited fields.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::grid::{ScalarField, Spectrum};
use crate::state::{MomentumField, SimulationState, VelocityField};

/// Stress split of the conservative form at one instant.
pub struct StressTensor {
    /// `T^a`, row-major d x d; symmetric pointwise.
    pub symmetric_part: Vec<ScalarField>,
    /// The inner tensor `u_j d_k u_i` whose scaled divergence gives `T^b`,
    /// indexed `(i*d + j)*d + k`.
    pub remainder_inner: Vec<ScalarField>,
    pub alpha: f64,
}

impl StressTensor {
    pub fn symmetric(&self, i: usize, j: usize) -> &ScalarField {
        let d = (self.symmetric_part.len() as f64).sqrt() as usize;
        &self.symmetric_part[i * d + j]
    }

    pub fn inner(&self, i: usize, j: usize, k: usize) -> &ScalarField {
        let d = match self.remainder_inner.len() {
            1 => 1,
            8 => 2,
            n => panic!("unexpected inner tensor size {n}"),
        };
        &self.remainder_inner[(i * d + j) * d + k]
    }
}

fn pointwise(grid: &std::sync::Arc<crate::grid::Grid>, f: impl Fn(usize) -> f64) -> ScalarField {
    let values = (0..grid.len()).map(f).collect();
    ScalarField::from_values(grid, values).expect("sized by grid")
}

/// The symmetric stress `T^a` as raw pointwise products (no dealiasing), so
/// pointwise identities such as the trace formula hold to rounding.
pub fn stress_symmetric(u: &VelocityField, alpha: f64) -> Result<Vec<ScalarField>> {
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::NegativeAlpha(alpha));
    }
    let grid = u.grid().clone();
    let d = u.dim();
    let grad = u.gradient()?; // grad[i*d + j] = d_j u_i
    let gu = |i: usize, j: usize| grad[i * d + j].values();

    // |u|^2 and |grad u|^2 reused by every diagonal entry.
    let u_sq = pointwise(&grid, |p| {
        (0..d).map(|i| u.component(i).values()[p].powi(2)).sum()
    });
    let grad_sq = pointwise(&grid, |p| {
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += gu(i, j)[p].powi(2);
            }
        }
        s
    });

    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let ui = u.component(i).values();
            let uj = u.component(j).values();
            let field = pointwise(&grid, |p| {
                let mut t = ui[p] * uj[p];
                for k in 0..d {
                    // alpha * (d_k u_i d_k u_j - d_i u_k d_j u_k)
                    t += alpha * (gu(i, k)[p] * gu(j, k)[p] - gu(k, i)[p] * gu(k, j)[p]);
                }
                if i == j {
                    t += 0.5 * (u_sq.values()[p] + alpha * grad_sq.values()[p]);
                }
                t
            });
            out.push(field);
        }
    }
    Ok(out)
}

/// Full stress split: `T^a` plus the inner tensor behind `T^b`.
pub fn stress_tensor(u: &VelocityField, alpha: f64) -> Result<StressTensor> {
    let symmetric_part = stress_symmetric(u, alpha)?;
    let grid = u.grid().clone();
    let d = u.dim();
    let grad = u.gradient()?;
    let mut remainder_inner = Vec::with_capacity(d * d * d);
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                let uj = u.component(j).values();
                let gik = grad[i * d + k].values();
                remainder_inner.push(pointwise(&grid, |p| uj[p] * gik[p]));
            }
        }
    }
    Ok(StressTensor {
        symmetric_part,
        remainder_inner,
        alpha,
    })
}

fn check_finite(fields: &[ScalarField]) -> Result<()> {
    if fields.iter().all(|f| f.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("rhs output"))
    }
}

fn maybe_dealias(field: ScalarField, dealias: bool) -> ScalarField {
    if dealias {
        crate::grid::dealias(&field)
    } else {
        field
    }
}

/// Convective-form tendency with explicit dealias control.
pub fn rhs_convective_with(s: &SimulationState, dealias: bool) -> Result<MomentumField> {
    let u = &s.velocity;
    let d = u.dim();
    let alpha = s.alpha;

    let uhat: Vec<Spectrum> = u.components().iter().map(|c| c.spectrum()).collect();
    let mhat: Vec<Spectrum> = uhat
        .iter()
        .map(|h| h.scale_by_k2(|k2| 1.0 + alpha * k2))
        .collect();
    let m: Vec<ScalarField> = mhat.iter().map(|h| h.to_field()).collect();
    // du[i*d + j] = d_j u_i, dm likewise.
    let mut du = Vec::with_capacity(d * d);
    let mut dm = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            du.push(uhat[i].derivative(j).into_field());
            dm.push(mhat[i].derivative(j).into_field());
        }
    }
    let grid = u.grid().clone();
    let div_u = pointwise(&grid, |p| (0..d).map(|i| du[i * d + i].values()[p]).sum());

    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        let field = pointwise(&grid, |p| {
            let mut advect = 0.0;
            let mut stretch = 0.0;
            for j in 0..d {
                advect += u.component(j).values()[p] * dm[i * d + j].values()[p];
                stretch += du[j * d + i].values()[p] * m[j].values()[p];
            }
            -(advect + stretch + div_u.values()[p] * m[i].values()[p])
        });
        out.push(maybe_dealias(field, dealias));
    }
    check_finite(&out)?;
    MomentumField::new(out, alpha)
}

/// `dm/dt = -(u.grad)m - (grad u)^T m - (div u) m`, products dealiased.
pub fn rhs_convective(s: &SimulationState) -> Result<MomentumField> {
    rhs_convective_with(s, true)
}

/// Conservative-form tendency with explicit dealias control.
pub fn rhs_conservative_with(s: &SimulationState, dealias: bool) -> Result<MomentumField> {
    let u = &s.velocity;
    let d = u.dim();
    let stress = stress_tensor(u, s.alpha)?;

    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        let mut acc = Spectrum::zeros(u.grid());
        for j in 0..d {
            // -d_j T^a_ij
            let mut spec = stress.symmetric(i, j).spectrum();
            if dealias {
                spec.dealias_in_place();
            }
            acc.add_scaled_in_place(&spec.derivative(j), Complex::new(-1.0, 0.0));
            // +alpha * d_j d_k (u_j d_k u_i)   (  = -d_j T^b_ij )
            for k in 0..d {
                let mut inner = stress.inner(i, j, k).spectrum();
                if dealias {
                    inner.dealias_in_place();
                }
                acc.add_scaled_in_place(
                    &inner.derivative(k).derivative(j),
                    Complex::new(s.alpha, 0.0),
                );
            }
        }
        out.push(acc.into_field());
    }
    check_finite(&out)?;
    MomentumField::new(out, s.alpha)
}

/// `dm_i/dt = -sum_j d_j (T^a_ij + T^b_ij)`; must match [`rhs_convective`]
/// on band-limited fields to rounding.
pub fn rhs_conservative(s: &SimulationState) -> Result<MomentumField> {
    rhs_conservative_with(s, true)
}

/// Zero-dispersion tendency with explicit dealias control.
pub fn rhs_zero_alpha_with(u: &VelocityField, dealias: bool) -> Result<VelocityField> {
    let d = u.dim();
    let grid = u.grid().clone();

    // Unique quadratic products u_i u_j.
    let mut prod_spec = vec![None; d * d];
    for i in 0..d {
        for j in i..d {
            let ui = u.component(i).values();
            let uj = u.component(j).values();
            let mut spec = pointwise(&grid, |p| ui[p] * uj[p]).spectrum();
            if dealias {
                spec.dealias_in_place();
            }
            prod_spec[i * d + j] = Some(spec);
        }
    }
    let prod = |i: usize, j: usize| -> &Spectrum {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        prod_spec[a * d + b].as_ref().unwrap()
    };

    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        let mut acc = Spectrum::zeros(&grid);
        // -div(u (x) u)_i = -sum_j d_j (u_i u_j)
        for j in 0..d {
            acc.add_scaled_in_place(&prod(i, j).derivative(j), Complex::new(-1.0, 0.0));
        }
        // -(1/2) d_i |u|^2
        for j in 0..d {
            acc.add_scaled_in_place(&prod(j, j).derivative(i), Complex::new(-0.5, 0.0));
        }
        out.push(acc.into_field());
    }
    check_finite(&out)?;
    VelocityField::new(out)
}

/// `du/dt = -div(u (x) u) - grad(|u|^2)/2`; equals the convective form at
/// `alpha = 0` under the velocity/momentum identification.
pub fn rhs_zero_alpha(u: &VelocityField) -> Result<VelocityField> {
    rhs_zero_alpha_with(u, true)
}

/// Pointwise flux Jacobian of the zero-dispersion system in direction `e`:
/// `A = (u.e) Id + e u^T + u e^T`. Symmetric by construction.
pub fn flux_jacobian(u_point: &[f64], e: &[f64]) -> Result<Vec<f64>> {
    let d = u_point.len();
    if !(1..=3).contains(&d) || e.len() != d {
        return Err(Error::UnsupportedDimension(d));
    }
    let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::NonUnitDirection(norm));
    }
    let s: f64 = u_point.iter().zip(e).map(|(u, e)| u * e).sum();
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        for m in 0..d {
            a[i * d + m] = u_point[i] * e[m] + e[i] * u_point[m];
            if i == m {
                a[i * d + m] += s;
            }
        }
    }
    Ok(a)
}

/// Analytic spectrum of [`flux_jacobian`]: `u.e` with multiplicity `d - 2`
/// plus `2(u.e) +- |u|`. Returned sorted ascending.
pub fn flux_eigenvalues(u_point: &[f64], e: &[f64]) -> Result<Vec<f64>> {
    let d = u_point.len();
    if !(1..=3).contains(&d) || e.len() != d {
        return Err(Error::UnsupportedDimension(d));
    }
    let s: f64 = u_point.iter().zip(e).map(|(u, e)| u * e).sum();
    let mag = u_point.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut ev = match d {
        1 => vec![3.0 * s],
        2 => vec![2.0 * s - mag, 2.0 * s + mag],
        _ => vec![2.0 * s - mag, s, 2.0 * s + mag],
    };
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(ev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::tests::random_band_limited;
    use crate::grid::Grid;
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

    fn rel_diff(a: &[ScalarField], b: &[ScalarField]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (x, y) in a.iter().zip(b) {
            for (p, q) in x.values().iter().zip(y.values()) {
                num += (p - q) * (p - q);
                den += q * q;
            }
        }
        (num / den.max(1e-300)).sqrt()
    }

    #[test]
    fn all_forms_vanish_on_zero_and_constants() {
        let g = grid2(16);
        for u in [
            VelocityField::zeros(&g),
            VelocityField::from_fn(&g, |i, _| 1.0 + i as f64),
        ] {
            let s = SimulationState::new(u.clone(), 0.7).unwrap();
            assert_eq!(rhs_convective(&s).unwrap().component(0).max_abs(), 0.0);
            assert!(rhs_conservative(&s).unwrap().component(1).max_abs() < 1e-12);
            assert!(rhs_zero_alpha(&u).unwrap().component(0).max_abs() < 1e-12);
        }
    }

    #[test]
    fn convective_matches_conservative_on_band_limited_fields() {
        let g = grid2(32);
        for seed in 0..4 {
            let u = band_limited_velocity(&g, g.dealias_cutoff(), seed);
            let s = SimulationState::new(u, 0.8).unwrap();
            let a = rhs_convective(&s).unwrap();
            let b = rhs_conservative(&s).unwrap();
            let err = rel_diff(a.components(), b.components());
            assert!(err <= 1e-10, "seed {seed}: relative difference {err}");
        }
    }

    #[test]
    fn convective_at_zero_alpha_matches_hyperbolic_form() {
        let g = grid2(32);
        let u = band_limited_velocity(&g, 9, 42);
        let s = SimulationState::new(u.clone(), 0.0).unwrap();
        let a = rhs_convective(&s).unwrap();
        let b = rhs_zero_alpha(&u).unwrap();
        assert!(rel_diff(a.components(), b.components()) <= 1e-10);
    }

    #[test]
    fn stress_is_symmetric_and_traces_correctly() {
        let g = grid2(32);
        let u = band_limited_velocity(&g, 8, 3);
        let alpha = 1.3;
        let t = stress_symmetric(&u, alpha).unwrap();
        let d = 2;
        let scale = t.iter().fold(0.0_f64, |m, f| m.max(f.max_abs()));
        for i in 0..d {
            for j in 0..d {
                for (a, b) in t[i * d + j].values().iter().zip(t[j * d + i].values()) {
                    assert!((a - b).abs() <= 1e-12 * scale);
                }
            }
        }
        // tr T^a = (N+2)/2 |u|^2 + alpha*N/2 |grad u|^2 pointwise.
        let grad = u.gradient().unwrap();
        for p in 0..g.len() {
            let trace = t[0].values()[p] + t[3].values()[p];
            let usq: f64 = (0..d).map(|i| u.component(i).values()[p].powi(2)).sum();
            let gsq: f64 = grad.iter().map(|f| f.values()[p].powi(2)).sum();
            let expect = (d as f64 + 2.0) / 2.0 * usq + alpha * d as f64 / 2.0 * gsq;
            assert!((trace - expect).abs() <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn stress_1d_closed_form() {
        // alpha = 0, u = sin x  =>  T^a = sin^2 x + sin^2 x / 2 = 1.5 sin^2 x
        let g = Grid::new(1, 64, 2.0 * PI).unwrap();
        let u = VelocityField::from_fn(&g, |_, x| x[0].sin());
        let t = stress_symmetric(&u, 0.0).unwrap();
        for (flat, v) in t[0].values().iter().enumerate() {
            let x = g.position(flat)[0];
            assert_abs_diff_eq!(*v, 1.5 * x.sin().powi(2), epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_alpha_1d_closed_form() {
        // u = sin x  =>  du/dt = -3 sin x cos x
        let g = Grid::new(1, 64, 2.0 * PI).unwrap();
        let u = VelocityField::from_fn(&g, |_, x| x[0].sin());
        let r = rhs_zero_alpha(&u).unwrap();
        for (flat, v) in r.component(0).values().iter().enumerate() {
            let x = g.position(flat)[0];
            assert_abs_diff_eq!(*v, -3.0 * x.sin() * x.cos(), epsilon = 1e-11);
        }
    }

    #[test]
    fn entropy_flux_integral_vanishes() {
        // Discrete image of the convex-entropy identity: u . du/dt has zero mean.
        let g = grid2(32);
        let u = band_limited_velocity(&g, 9, 8);
        let r = rhs_zero_alpha(&u).unwrap();
        let mut total = 0.0;
        let mut scale = 0.0;
        for i in 0..2 {
            for (a, b) in u.component(i).values().iter().zip(r.component(i).values()) {
                total += a * b;
                scale += (a * b).abs();
            }
        }
        assert!(total.abs() <= 1e-11 * scale.max(1.0));
    }

    #[test]
    fn energy_pairing_vanishes_for_convective_form() {
        // Discrete image of d/dt Int(|u|^2 + alpha |grad u|^2) = 0.
        let g = grid2(32);
        let u = band_limited_velocity(&g, 9, 21);
        let s = SimulationState::new(u.clone(), 0.6).unwrap();
        let r = rhs_convective(&s).unwrap();
        let mut total = 0.0;
        let mut scale = 0.0;
        for i in 0..2 {
            for (a, b) in u.component(i).values().iter().zip(r.component(i).values()) {
                total += a * b;
                scale += (a * b).abs();
            }
        }
        assert!(total.abs() <= 1e-11 * scale.max(1.0));
    }

    #[test]
    fn flux_jacobian_reproduces_reference_matrix() {
        let a = flux_jacobian(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(a, vec![3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let ev = flux_eigenvalues(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(ev, vec![1.0, 1.0, 3.0]);
    }

    #[test]
    fn flux_jacobian_zero_velocity() {
        let a = flux_jacobian(&[0.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!(a.iter().all(|x| *x == 0.0));
        assert_eq!(flux_eigenvalues(&[0.0, 0.0], &[0.0, 1.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn flux_jacobian_rejects_non_unit_direction() {
        assert!(matches!(
            flux_jacobian(&[1.0, 2.0], &[1.0, 1.0]),
            Err(Error::NonUnitDirection(_))
        ));
    }

    #[test]
    fn flux_jacobian_is_symmetric_exactly() {
        let u = [0.3, -1.7, 2.2];
        let e = {
            let raw: [f64; 3] = [2.0, -1.0, 0.5];
            let n = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            [raw[0] / n, raw[1] / n, raw[2] / n]
        };
        let a = flux_jacobian(&u, &e).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a[i * 3 + j], a[j * 3 + i]);
            }
        }
    }

    /// Dense symmetric eigensolver as the independent oracle for the
    /// eigenvalue formula.
    #[test]
    fn flux_eigenvalues_match_dense_solver() {
        use nalgebra::{DMatrix, SymmetricEigen};
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..50 {
            let u: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n < 1e-3 {
                continue;
            }
            let e: Vec<f64> = raw.iter().map(|x| x / n).collect();
            let a = flux_jacobian(&u, &e).unwrap();
            let m = DMatrix::from_row_slice(3, 3, &a);
            let mut numeric: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
            numeric.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let analytic = flux_eigenvalues(&u, &e).unwrap();
            for (x, y) in numeric.iter().zip(&analytic) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-10);
            }
        }
    }
}
