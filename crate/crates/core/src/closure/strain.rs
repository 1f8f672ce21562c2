//! The one-dimensional random strain flow v = x: closed-form mean and per-realization
//! solutions for a point source.

use super::{solve_white_closure, AxisSpec, ClosureGenerator, GridSpec, ScalarField, TimeStepping};
use crate::error::{invalid, Result};
use crate::fields::{make_field, FieldCatalogEntry};
use crate::ic::{richardson_vec, InitialCondition};
use crate::noise::BrownianPath;
use std::f64::consts::PI;

fn check(t: f64, kappa: f64, g: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("time must be positive, got {t}")));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(invalid(format!("diffusivity must be positive, got {kappa}")));
    }
    if !(g >= 0.0 && g.is_finite()) {
        return Err(invalid(format!("strain amplitude must be non-negative, got {g}")));
    }
    Ok(())
}

/// Mean scalar of a unit point source at the origin:
/// Ψ = exp(−z²/4t) / (2√(πκt)) with z = (√2/g) asinh(gx/√(2κ)).
/// At g = 0 this is the heat kernel.
pub fn strain_exact(x: f64, t: f64, kappa: f64, g: f64) -> Result<f64> {
    check(t, kappa, g)?;
    let z = if g == 0.0 {
        x / kappa.sqrt()
    } else {
        std::f64::consts::SQRT_2 / g * (g * x / (2.0 * kappa).sqrt()).asinh()
    };
    Ok((-z * z / (4.0 * t)).exp() / (2.0 * (PI * kappa * t).sqrt()))
}

/// The closed-form mean as an object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrainSolution {
    pub kappa: f64,
    pub g: f64,
}

impl StrainSolution {
    pub fn new(kappa: f64, g: f64) -> Result<Self> {
        check(1.0, kappa, g)?;
        Ok(StrainSolution { kappa, g })
    }

    pub fn value(&self, x: f64, t: f64) -> Result<f64> {
        strain_exact(x, t, self.kappa, self.g)
    }

    /// ∫Ψ dx = e^{g²t/2}: the compressible strain creates mass on average.
    pub fn mass(&self, t: f64) -> f64 {
        (0.5 * self.g * self.g * t).exp()
    }

    /// Half-width beyond which Ψ < `rel`·Ψ(0).
    pub fn decay_radius(&self, t: f64, rel: f64) -> f64 {
        let z = (4.0 * t * (1.0 / rel).ln()).sqrt();
        if self.g == 0.0 {
            z * self.kappa.sqrt()
        } else {
            (2.0 * self.kappa).sqrt() / self.g * (self.g * z / std::f64::consts::SQRT_2).sinh()
        }
    }
}

/// Closure solution for a unit point source, computed on `axis` from Gaussian
/// sources of widths `width` and `width/2` on `axis` and its refinement. Both the
/// O(w²) source error and the O(h²) grid error are removed by extrapolation.
pub fn strain_delta_closure(
    kappa: f64,
    g: f64,
    t: f64,
    axis: &AxisSpec,
    width: f64,
    stepping: &TimeStepping,
) -> Result<ScalarField> {
    if axis.is_periodic() {
        return Err(invalid("the strain source needs a truncated axis"));
    }
    if !(width > 0.0 && width.is_finite()) {
        return Err(invalid(format!("source width must be positive, got {width}")));
    }
    let gen = ClosureGenerator::white(kappa, g, make_field(&FieldCatalogEntry::Strain { dim: 1 })?)?;
    let solve = |spec: &AxisSpec| -> Result<ScalarField> {
        let grid = GridSpec::new(vec![spec.clone()]);
        let wide = solve_white_closure(&gen, &InitialCondition::gaussian(vec![0.0], width), &grid, t, stepping)?;
        let narrow =
            solve_white_closure(&gen, &InitialCondition::gaussian(vec![0.0], 0.5 * width), &grid, t, stepping)?;
        let values = richardson_vec(&wide.values, &narrow.values, 2);
        ScalarField::new(wide.grid, values)
    };
    let coarse = solve(axis)?;
    let fine = solve(&axis.refined())?;
    let restricted: Vec<f64> = (0..coarse.values.len()).map(|i| fine.values[2 * i + 1]).collect();
    let values = richardson_vec(&coarse.values, &restricted, 2);
    ScalarField::new(coarse.grid, values)
}

/// Scalar at (x, t) for one Brownian realization and a unit source at x₀:
/// T = (4πκI)^{-1/2} exp(−e^{−2gB(t)}(x − x₀e^{gB(t)})²/(4κI)), I = ∫₀ᵗ e^{−2gB(s)} ds
/// by the trapezoid rule on the path grid (the last partial interval uses the
/// interpolated endpoint).
pub fn strain_realization(x: f64, t: f64, kappa: f64, g: f64, x0: f64, path: &BrownianPath) -> Result<f64> {
    check(t, kappa, g)?;
    let dt = path.grid.dt();
    if path.grid.t_final() < t * (1.0 - 1e-12) {
        return Err(invalid(format!("path horizon {} is shorter than t = {t}", path.grid.t_final())));
    }
    let f = |b: f64| (-2.0 * g * b).exp();
    let full = ((t / dt) * (1.0 + 1e-12)).floor() as usize;
    let full = full.min(path.grid.n_steps());
    let mut integral = 0.0;
    for k in 0..full {
        integral += 0.5 * dt * (f(path.values[k]) + f(path.values[k + 1]));
    }
    let rest = t - dt * full as f64;
    let bt = path.at(t);
    if rest > 0.0 {
        integral += 0.5 * rest * (f(path.values[full]) + f(bt));
    }
    let shift = x - x0 * (g * bt).exp();
    Ok((-f(bt) * shift * shift / (4.0 * kappa * integral)).exp() / (4.0 * PI * kappa * integral).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{brownian_path_indexed, PathGrid};
    use crate::quadrature::{integrate, Tolerance};

    #[test]
    fn anchor_values() {
        assert!((strain_exact(0.0, 1.0, 1.0, 1.0).unwrap() - 0.5 / PI.sqrt()).abs() < 1e-15);
        assert!((strain_exact(1.0, 1.0, 1.0, 0.0).unwrap() - 0.2196956447338612).abs() < 1e-12);
        let z = std::f64::consts::SQRT_2 * (1.0 / std::f64::consts::SQRT_2).asinh();
        assert!((z - 0.931).abs() < 1e-3);
        let v = strain_exact(1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((v - 0.2271).abs() < 1e-4, "{v}");
        assert_eq!(strain_exact(-2.5, 0.7, 1.3, 0.9).unwrap(), strain_exact(2.5, 0.7, 1.3, 0.9).unwrap());
        assert!(strain_exact(0.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn small_g_approaches_heat_kernel() {
        let a = strain_exact(1.0, 1.0, 1.0, 1e-6).unwrap();
        assert!((a - 0.2196956447338612).abs() < 1e-10);
    }

    #[test]
    fn mass_grows_exponentially() {
        let s = StrainSolution::new(1.0, 1.0).unwrap();
        let t = 1.0;
        let half = integrate(|x| s.value(x, t).unwrap(), 0.0, 5e4, Tolerance::default()).unwrap();
        assert!((2.0 * half.value / s.mass(t) - 1.0).abs() < 1e-8);
        let r = s.decay_radius(t, 1e-10);
        assert!((s.value(r, t).unwrap() / s.value(0.0, t).unwrap() - 1e-10).abs() < 1e-14);
    }

    #[test]
    fn satisfies_the_closure_equation() {
        // ∂tΨ = κΨ'' + (g²/2)(x∂x)²Ψ by finite differences.
        let (k, g, t, x, h) = (0.8, 1.2, 0.9, 0.7, 1e-3);
        let p = |x: f64, t: f64| strain_exact(x, t, k, g).unwrap();
        let pt = (p(x, t + h) - p(x, t - h)) / (2.0 * h);
        let pxx = (p(x + h, t) - 2.0 * p(x, t) + p(x - h, t)) / (h * h);
        let px = (p(x + h, t) - p(x - h, t)) / (2.0 * h);
        let rhs = k * pxx + 0.5 * g * g * (x * x * pxx + x * px);
        assert!((pt - rhs).abs() < 1e-6, "{pt} vs {rhs}");
    }

    #[test]
    fn realization_limits() {
        let grid = PathGrid::covering(1.0, 100).unwrap();
        let zero = BrownianPath::from_values(grid, vec![0.0; 101]).unwrap();
        let v = strain_realization(0.4, 1.0, 1.0, 1.0, 0.1, &zero).unwrap();
        let heat = (-(0.3f64).powi(2) / 4.0).exp() / (4.0 * PI).sqrt();
        assert!((v - heat).abs() < 1e-14);
        let path = brownian_path_indexed(grid, 5, 0);
        let i = crate::noise::strain_integral(&path, 0.7);
        let at0 = strain_realization(0.0, 1.0, 1.0, 0.7, 0.0, &path).unwrap();
        assert!((at0 - crate::noise::x_from_strain_integral(1.0, i)).abs() < 1e-14);
        let short = BrownianPath::from_values(PathGrid::covering(0.5, 10).unwrap(), vec![0.0; 11]).unwrap();
        assert!(strain_realization(0.0, 1.0, 1.0, 1.0, 0.0, &short).is_err());
    }

    #[test]
    fn realization_mean_matches_closed_form() {
        let grid = PathGrid::covering(1.0, 1000).unwrap();
        let xs = [0.0, 0.5, 1.0, 2.0];
        let n = 100_000;
        let mut acc = vec![crate::stats::Accumulator::new(); xs.len()];
        for i in 0..n {
            let path = brownian_path_indexed(grid, 11, i);
            for (a, &x) in acc.iter_mut().zip(&xs) {
                a.push(strain_realization(x, 1.0, 1.0, 1.0, 0.0, &path).unwrap());
            }
        }
        for (a, &x) in acc.iter().zip(&xs) {
            let exact = strain_exact(x, 1.0, 1.0, 1.0).unwrap();
            assert!((a.mean() - exact).abs() < 3.0 * a.std_error(), "x={x}: {} vs {exact}", a.mean());
        }
    }
}
