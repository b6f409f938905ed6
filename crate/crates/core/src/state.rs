//! Velocity and momentum field types, the Helmholtz link between them,
//! reflection symmetrization and the plain-text field dump format.

use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{helmholtz_apply, helmholtz_invert, partial_derivative, Grid, ScalarField};

/// d-component velocity field; all components share one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    components: Vec<ScalarField>,
}

impl VelocityField {
    pub fn new(components: Vec<ScalarField>) -> Result<VelocityField> {
        let grid = components
            .first()
            .ok_or_else(|| Error::InvalidGrid("velocity field needs components".into()))?
            .grid()
            .clone();
        if components.len() != grid.dim() {
            return Err(Error::InvalidGrid(format!(
                "expected {} components, got {}",
                grid.dim(),
                components.len()
            )));
        }
        if components.iter().any(|c| c.grid().as_ref() != grid.as_ref()) {
            return Err(Error::GridMismatch);
        }
        Ok(VelocityField { components })
    }

    pub fn zeros(grid: &Arc<Grid>) -> VelocityField {
        VelocityField {
            components: (0..grid.dim()).map(|_| ScalarField::zeros(grid)).collect(),
        }
    }

    /// Sample component `i` as `f(i, position)`.
    pub fn from_fn(grid: &Arc<Grid>, mut f: impl FnMut(usize, &[f64]) -> f64) -> VelocityField {
        let components = (0..grid.dim())
            .map(|i| ScalarField::from_fn(grid, |x| f(i, x)))
            .collect();
        VelocityField { components }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.components[0].grid()
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.components[i]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut ScalarField {
        &mut self.components[i]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|c| c.is_finite())
    }

    /// Pointwise sup norm over all components.
    pub fn max_abs(&self) -> f64 {
        self.components.iter().fold(0.0, |m, c| m.max(c.max_abs()))
    }

    /// L2 norm of the vector field: sqrt(sum_i |u_i|_2^2).
    pub fn l2_norm(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.l2_norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn add_scaled(&self, other: &VelocityField, scale: f64) -> VelocityField {
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.add_scaled(b, scale))
            .collect();
        VelocityField { components }
    }

    pub fn scaled(&self, scale: f64) -> VelocityField {
        let components = self
            .components
            .iter()
            .map(|c| {
                ScalarField::from_values(
                    c.grid(),
                    c.values().iter().map(|v| v * scale).collect(),
                )
                .expect("same grid")
            })
            .collect();
        VelocityField { components }
    }

    /// All first derivatives `d_j u_i`, indexed `i * dim + j`.
    pub fn gradient(&self) -> Result<Vec<ScalarField>> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                out.push(partial_derivative(&self.components[i], j)?);
            }
        }
        Ok(out)
    }

    /// Sup norm of the full velocity gradient.
    pub fn sup_grad(&self) -> Result<f64> {
        Ok(self
            .gradient()?
            .iter()
            .fold(0.0, |m, g| m.max(g.max_abs())))
    }
}

/// d-component momentum field `m = (1 - alpha * Laplacian) u`, carrying the
/// alpha it was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumField {
    components: Vec<ScalarField>,
    alpha: f64,
}

impl MomentumField {
    pub fn new(components: Vec<ScalarField>, alpha: f64) -> Result<MomentumField> {
        if alpha < 0.0 || !alpha.is_finite() {
            return Err(Error::NegativeAlpha(alpha));
        }
        let v = VelocityField::new(components)?;
        Ok(MomentumField {
            components: v.components,
            alpha,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.components[0].grid()
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.components[i]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|c| c.is_finite())
    }

    pub fn l2_norm(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.l2_norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// The unit advanced by the integrators: time, velocity and alpha.
#[derive(Debug, Clone)]
pub struct SimulationState {
    pub time: f64,
    pub velocity: VelocityField,
    pub alpha: f64,
}

impl SimulationState {
    pub fn new(velocity: VelocityField, alpha: f64) -> Result<SimulationState> {
        if alpha < 0.0 || !alpha.is_finite() {
            return Err(Error::NegativeAlpha(alpha));
        }
        if !velocity.is_finite() {
            return Err(Error::NonFinite("initial velocity"));
        }
        Ok(SimulationState {
            time: 0.0,
            velocity,
            alpha,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.velocity.grid()
    }

    pub fn momentum(&self) -> MomentumField {
        momentum_from_velocity(&self.velocity, self.alpha)
            .expect("state alpha validated at construction")
    }
}

/// Componentwise Helmholtz application `m = (1 - alpha * Laplacian) u`.
pub fn momentum_from_velocity(u: &VelocityField, alpha: f64) -> Result<MomentumField> {
    let components = u
        .components()
        .iter()
        .map(|c| helmholtz_apply(c, alpha))
        .collect::<Result<Vec<_>>>()?;
    MomentumField::new(components, alpha)
}

/// Componentwise Helmholtz inversion `u = (1 - alpha * Laplacian)^-1 m`.
pub fn velocity_from_momentum(m: &MomentumField) -> Result<VelocityField> {
    let components = m
        .components()
        .iter()
        .map(|c| helmholtz_invert(c, m.alpha()))
        .collect::<Result<Vec<_>>>()?;
    VelocityField::new(components)
}

/// Odd part of a velocity field under the reflection `x -> -x`,
/// `u(x) -> -u(-x)`: returns `(u(x) - u(-x)) / 2` componentwise. The output
/// satisfies `ubar(-x) = -ubar(x)` exactly on the grid.
pub fn reflect_symmetrize(u: &VelocityField) -> VelocityField {
    let grid = u.grid().clone();
    let components = u
        .components()
        .iter()
        .map(|c| {
            let v = c.values();
            let odd: Vec<f64> = (0..v.len())
                .map(|flat| 0.5 * (v[flat] - v[grid.reflected_index(flat)]))
                .collect();
            ScalarField::from_values(&grid, odd).expect("same grid")
        })
        .collect();
    VelocityField { components }
}

/// Sup norm of the even residual `u(x) + u(-x)`; zero for odd fields.
pub fn reflection_asymmetry(u: &VelocityField) -> f64 {
    let grid = u.grid();
    let mut worst = 0.0_f64;
    for c in u.components() {
        let v = c.values();
        for flat in 0..v.len() {
            worst = worst.max((v[flat] + v[grid.reflected_index(flat)]).abs());
        }
    }
    worst
}

// ---- Field dump format ----------------------------------------------------
//
// Plain-text layout, stable across versions:
//
//   line 1: `epsim-field v1`
//   line 2: `dim=<d> n=<N> length=<L> alpha=<a> time=<t>`
//   then one line per grid point in row-major order with the component
//   values separated by commas, full-precision decimal.

/// Write a velocity field with its metadata header.
pub fn write_field<W: Write>(
    mut w: W,
    u: &VelocityField,
    alpha: f64,
    time: f64,
) -> std::io::Result<()> {
    let grid = u.grid();
    writeln!(w, "epsim-field v1")?;
    writeln!(
        w,
        "dim={} n={} length={} alpha={} time={}",
        grid.dim(),
        grid.points_per_axis(),
        grid.length(),
        alpha,
        time
    )?;
    for flat in 0..grid.len() {
        let row: Vec<String> = u
            .components()
            .iter()
            .map(|c| format!("{}", c.values()[flat]))
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Read a field dump produced by [`write_field`].
pub fn read_field<R: BufRead>(r: R) -> Result<(VelocityField, f64, f64)> {
    let bad = |msg: &str| Error::InvalidGrid(format!("field dump: {msg}"));
    let mut lines = r.lines();
    let magic = lines
        .next()
        .ok_or_else(|| bad("empty input"))?
        .map_err(|e| bad(&e.to_string()))?;
    if magic.trim() != "epsim-field v1" {
        return Err(bad("unrecognized header"));
    }
    let meta = lines
        .next()
        .ok_or_else(|| bad("missing metadata line"))?
        .map_err(|e| bad(&e.to_string()))?;
    let mut dim = 0usize;
    let mut n = 0usize;
    let mut length = 0.0f64;
    let mut alpha = 0.0f64;
    let mut time = 0.0f64;
    for part in meta.split_whitespace() {
        let (key, val) = part
            .split_once('=')
            .ok_or_else(|| bad("malformed metadata entry"))?;
        match key {
            "dim" => dim = val.parse().map_err(|_| bad("bad dim"))?,
            "n" => n = val.parse().map_err(|_| bad("bad n"))?,
            "length" => length = val.parse().map_err(|_| bad("bad length"))?,
            "alpha" => alpha = val.parse().map_err(|_| bad("bad alpha"))?,
            "time" => time = val.parse().map_err(|_| bad("bad time"))?,
            other => return Err(bad(&format!("unknown metadata key {other}"))),
        }
    }
    let grid = Grid::new(dim, n, length)?;
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.len()); dim];
    for line in lines {
        let line = line.map_err(|e| bad(&e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split(',');
        for col in columns.iter_mut() {
            let tok = it.next().ok_or_else(|| bad("short row"))?;
            col.push(tok.trim().parse().map_err(|_| bad("bad value"))?);
        }
    }
    let components = columns
        .into_iter()
        .map(|c| ScalarField::from_values(&grid, c))
        .collect::<Result<Vec<_>>>()?;
    Ok((VelocityField::new(components)?, alpha, time))
}
