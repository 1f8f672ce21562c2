//! Deterministic solvers for the closed mean equations.
//!
//! * White noise: ∂_tΨ = κΔΨ + (g²/2)(v·∇)²Ψ.
//! * Ornstein–Uhlenbeck noise: ψ(x, z, t) with an auxiliary Gaussian variable z, expanded
//!   in Hermite functions; Ψ is the z-average.
//! * Shear flows in N-point form, reduced by Fourier transform in the streamwise
//!   coordinates.
//! * The random strain flow, in closed form and per realization.

mod grid;
mod ou;
mod shear;
mod strain;
mod stepping;

pub use grid::{Axis, AxisSpec, Grid, GridSpec, ScalarField, MIN_HERMITE, MIN_POINTS};
pub use ou::{solve_ou_closure, OuSolution, HERMITE_TOLERANCE};
pub use shear::{solve_ou_shear, solve_shear_npoint, streamwise_axis, MAX_SHEAR_POINTS};
pub use stepping::{InitialLayer, TimeScheme, TimeStepping};
pub use strain::{strain_delta_closure, strain_exact, strain_realization, StrainSolution};

use crate::error::{invalid, Result};
use crate::fields::VelocityField;
use crate::ic::InitialCondition;
use crate::linalg::Csr;

/// Relative magnitude allowed on nodes next to a truncated boundary.
pub const BOUNDARY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseMode {
    White,
    Ou { gamma: f64 },
}

/// Mean-field generator: κ, the noise amplitude g (g = σ/γ for OU noise) and the field.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosureGenerator {
    pub kappa: f64,
    pub g: f64,
    pub field: VelocityField,
    pub mode: NoiseMode,
}

impl ClosureGenerator {
    pub fn white(kappa: f64, g: f64, field: VelocityField) -> Result<Self> {
        let gen = ClosureGenerator { kappa, g, field, mode: NoiseMode::White };
        gen.validate()?;
        Ok(gen)
    }

    pub fn ou(kappa: f64, g: f64, gamma: f64, field: VelocityField) -> Result<Self> {
        let gen = ClosureGenerator { kappa, g, field, mode: NoiseMode::Ou { gamma } };
        gen.validate()?;
        Ok(gen)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(invalid(format!("diffusivity must be non-negative, got {}", self.kappa)));
        }
        if !self.g.is_finite() {
            return Err(invalid("noise amplitude must be finite"));
        }
        if let NoiseMode::Ou { gamma } = self.mode {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(invalid(format!("OU damping must be positive, got {gamma}")));
            }
        }
        Ok(())
    }

    /// The same generator in the white-noise limit.
    pub fn white_limit(&self) -> ClosureGenerator {
        ClosureGenerator { mode: NoiseMode::White, ..self.clone() }
    }
}

fn check_dims(grid: &Grid, field: &VelocityField, ic: Option<&InitialCondition>) -> Result<()> {
    if grid.dim() != field.dim() {
        return Err(invalid(format!("grid has {} axes but the field lives in {} dimensions", grid.dim(), field.dim())));
    }
    if let Some(ic) = ic {
        ic.validate(grid.dim())?;
    }
    Ok(())
}

/// κΔ on the grid.
pub fn diffusion_operator(grid: &Grid, kappa: f64) -> Csr {
    let n = grid.len();
    let mut a = Csr::from_triplets(n, n, vec![]);
    for (i, ax) in grid.axes.iter().enumerate() {
        a = a.axpby(1.0, &grid.embed(i, &ax.d2()), kappa);
    }
    a
}

/// Discrete v·∇ = Σ_a diag(v_a) D_a at time t.
pub fn advection_operator(grid: &Grid, field: &VelocityField, t: f64) -> Csr {
    let n = grid.len();
    let vel: Vec<Vec<f64>> = {
        let mut p = vec![0.0; grid.dim()];
        let mut v = vec![0.0; grid.dim()];
        let mut out = vec![vec![0.0; n]; grid.dim()];
        for i in 0..n {
            grid.point_into(i, &mut p);
            field.evaluate_into(&p, t, &mut v);
            for a in 0..grid.dim() {
                out[a][i] = v[a];
            }
        }
        out
    };
    let mut d = Csr::from_triplets(n, n, vec![]);
    for (a, ax) in grid.axes.iter().enumerate() {
        if vel[a].iter().all(|&v| v == 0.0) {
            continue;
        }
        d = d.axpby(1.0, &grid.embed(a, &ax.d1()).scale_rows(&vel[a]), 1.0);
    }
    d
}

/// Discrete (v·∇)² at time t.
///
/// Divergence-free fields use −W⁻¹D_vᵀWD_v, negative semidefinite in the quadrature
/// inner product. A one-dimensional field on a truncated axis (the compressible strain
/// x∂_x) uses the compact conservative form v∂_x(v∂_x ·).
pub fn closure_term(grid: &Grid, field: &VelocityField, t: f64) -> Result<Csr> {
    if grid.dim() == 1 && !grid.axes[0].is_periodic() {
        let f = field.clone();
        return Ok(grid.axes[0].conservative_second(move |x| f.evaluate(&[x], t)[0]));
    }
    if !field.divergence_free() {
        return Err(invalid(format!(
            "field `{}` is compressible; only its one-dimensional form is supported",
            field.name()
        )));
    }
    let d = advection_operator(grid, field, t);
    let w = grid.weights();
    let winv: Vec<f64> = w.iter().map(|x| -1.0 / x).collect();
    Ok(d.transpose().scale_rows(&winv).matmul(&d.scale_rows(&w)))
}

/// κΔ + (g²/2)(v·∇)² at time t.
pub fn white_operator(gen: &ClosureGenerator, grid: &Grid, t: f64) -> Result<Csr> {
    check_dims(grid, &gen.field, None)?;
    let a = diffusion_operator(grid, gen.kappa);
    if gen.g == 0.0 {
        return Ok(a);
    }
    Ok(a.axpby(1.0, &closure_term(grid, &gen.field, t)?, 0.5 * gen.g * gen.g))
}

/// Ψ(·, t) for the white-noise closure started from `ic` at time 0.
pub fn solve_white_closure(
    gen: &ClosureGenerator,
    ic: &InitialCondition,
    grid: &GridSpec,
    t: f64,
    stepping: &TimeStepping,
) -> Result<ScalarField> {
    let grid = grid.build()?;
    check_dims(&grid, &gen.field, Some(ic))?;
    let u0 = ScalarField::new(grid.clone(), grid.sample(|x| ic.evaluate(x)))?;
    evolve_white_closure(gen, &u0, 0.0, t, stepping)
}

/// Advance an existing field from time `t0` to `t1` under the white-noise closure.
pub fn evolve_white_closure(
    gen: &ClosureGenerator,
    initial: &ScalarField,
    t0: f64,
    t1: f64,
    stepping: &TimeStepping,
) -> Result<ScalarField> {
    if gen.mode != NoiseMode::White {
        return Err(invalid("expected a white-noise generator"));
    }
    gen.validate()?;
    let grid = &initial.grid;
    check_dims(grid, &gen.field, None)?;
    let values = if gen.field.is_steady() {
        let a = white_operator(gen, grid, 0.0)?;
        stepping.integrate(&a, &initial.values, t1 - t0)?
    } else {
        stepping.integrate_varying(|t| white_operator(gen, grid, t), &initial.values, t0, t1)?
    };
    let out = ScalarField::new(grid.clone(), values)?;
    out.assert_boundary_decay(BOUNDARY_TOLERANCE)?;
    Ok(out)
}

#[cfg(test)]
mod tests;
