//! Shear flows v = (u(y, t), 0) in N-point form.
//!
//! With coordinates ordered (x₁, y₁, …, x_N, y_N) and periodic streamwise axes, a
//! Fourier transform in x₁..x_N turns (Σ_j u(y_j)∂_{x_j})² into multiplication by
//! −(Σ_j k_j u(y_j))², leaving an independent problem in y for every wave vector.
//! The streamwise box must be wide enough that the solution does not wrap.

use super::grid::{AxisSpec, Grid, GridSpec, ScalarField};
use super::ou::{deinterleave, finish, ou_system, OuSolution};
use super::{diffusion_operator, ClosureGenerator, NoiseMode, TimeStepping, BOUNDARY_TOLERANCE};
use crate::error::{invalid, Error, Result};
use crate::fields::VelocityField;
use crate::ic::InitialCondition;
use crate::linalg::Csr;
use crate::spectral::fft_along;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

/// Largest number of grid nodes accepted by the N-point solver.
pub const MAX_SHEAR_POINTS: usize = 1 << 24;
const MAX_N: usize = 3;
/// Fourier coefficients below this fraction of the largest are not evolved.
const SKIP_FRACTION: f64 = 1e-12;

struct Layout {
    n: usize,
    x_shape: Vec<usize>,
    y_grid: Grid,
    wavenumbers: Vec<Vec<f64>>,
}

impl Layout {
    fn new(grid: &Grid, n: usize) -> Result<Layout> {
        if grid.dim() != 2 * n {
            return Err(invalid(format!("N = {n} needs {} axes ordered (x1, y1, …), got {}", 2 * n, grid.dim())));
        }
        let mut y_axes = Vec::new();
        for j in 0..n {
            if !grid.axes[2 * j].is_periodic() {
                return Err(invalid(format!("streamwise axis x{} must be periodic", j + 1)));
            }
            y_axes.push(grid.axes[2 * j + 1].spec.clone());
        }
        Ok(Layout {
            n,
            x_shape: (0..n).map(|j| grid.axes[2 * j].len()).collect(),
            y_grid: GridSpec::new(y_axes).build()?,
            wavenumbers: (0..n).map(|j| grid.axes[2 * j].wavenumbers()).collect(),
        })
    }

    fn nx(&self) -> usize {
        self.x_shape.iter().product()
    }

    /// Flat full-grid index of (x multi-index, y flat index).
    fn full_index(&self, grid: &Grid, xi: usize, yi: usize) -> usize {
        let xm = multi(&self.x_shape, xi);
        let ym = self.y_grid.multi_index(yi);
        let mut idx = 0;
        for j in 0..self.n {
            idx = idx * grid.axes[2 * j].len() + xm[j];
            idx = idx * grid.axes[2 * j + 1].len() + ym[j];
        }
        idx
    }

    /// Wave vector of x multi-index, or None for modes touching a Nyquist frequency.
    fn wavevector(&self, xi: usize) -> Option<Vec<f64>> {
        let xm = multi(&self.x_shape, xi);
        let mut k = Vec::with_capacity(self.n);
        for j in 0..self.n {
            let n = self.x_shape[j];
            if n % 2 == 0 && xm[j] == n / 2 {
                return None;
            }
            k.push(self.wavenumbers[j][xm[j]]);
        }
        Some(k)
    }
}

impl Layout {
    /// Index of the wave vector −k.
    fn conjugate(&self, xi: usize) -> usize {
        let xm = multi(&self.x_shape, xi);
        xm.iter().zip(&self.x_shape).fold(0, |acc, (&m, &n)| acc * n + (n - m) % n)
    }
}

fn multi(shape: &[usize], mut idx: usize) -> Vec<usize> {
    let mut out = vec![0; shape.len()];
    for a in (0..shape.len()).rev() {
        out[a] = idx % shape[a];
        idx /= shape[a];
    }
    out
}

fn shear_speed(field: &VelocityField) -> Result<impl Fn(f64, f64) -> f64 + Sync + '_> {
    if field.copies() != 1 || field.dim() != 2 || !field.is_shear() {
        return Err(invalid(format!("field `{}` is not a planar shear (u(y, t), 0)", field.name())));
    }
    Ok(move |y: f64, t: f64| field.evaluate(&[0.0, y], t)[0])
}

/// Forward transform of the sampled IC into layout [x modes][y nodes].
fn transform_ic(grid: &Grid, lay: &Layout, ic: &InitialCondition) -> Vec<Complex64> {
    let vals = grid.sample(|x| ic.evaluate(x));
    let ny = lay.y_grid.len();
    let mut data = vec![Complex64::new(0.0, 0.0); lay.nx() * ny];
    for xi in 0..lay.nx() {
        for yi in 0..ny {
            data[xi * ny + yi] = Complex64::new(vals[lay.full_index(grid, xi, yi)], 0.0);
        }
    }
    let mut shape = lay.x_shape.clone();
    shape.push(ny);
    let mut planner = FftPlanner::new();
    for a in 0..lay.n {
        fft_along(&mut data, &shape, a, false, &mut planner);
    }
    data
}

fn inverse_to_grid(grid: &Grid, lay: &Layout, mut data: Vec<Complex64>) -> Vec<f64> {
    let ny = lay.y_grid.len();
    let mut shape = lay.x_shape.clone();
    shape.push(ny);
    let mut planner = FftPlanner::new();
    for a in 0..lay.n {
        fft_along(&mut data, &shape, a, true, &mut planner);
    }
    let scale = 1.0 / lay.nx() as f64;
    let mut out = vec![0.0; grid.len()];
    for xi in 0..lay.nx() {
        for yi in 0..ny {
            out[lay.full_index(grid, xi, yi)] = data[xi * ny + yi].re * scale;
        }
    }
    out
}

/// Wave vectors worth evolving: not Nyquist, and with a non-negligible coefficient.
fn active_modes(lay: &Layout, data: &[Complex64]) -> Vec<(usize, Vec<f64>)> {
    let ny = lay.y_grid.len();
    let peak = data.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    (0..lay.nx())
        .filter_map(|xi| {
            let k = lay.wavevector(xi)?;
            let big = data[xi * ny..(xi + 1) * ny].iter().any(|z| z.norm() > SKIP_FRACTION * peak);
            big.then_some((xi, k))
        })
        .collect()
}

fn guard(grid: &Grid, n: usize, extra: usize) -> Result<()> {
    if n == 0 || n > MAX_N {
        return Err(invalid(format!("N-point shear solver supports 1 ≤ N ≤ {MAX_N}, got {n}")));
    }
    let total = grid.len().saturating_mul(extra);
    if total > MAX_SHEAR_POINTS {
        return Err(Error::Memory(format!(
            "{total} unknowns (≈{} MB of complex data) exceed the limit of {MAX_SHEAR_POINTS}",
            total * 32 / 1_000_000
        )));
    }
    Ok(())
}

/// Multiplier operator on the y grid: κ(Δ_y − |k|²) − (g²/2)(Σ_j k_j u(y_j, t))².
fn mode_operator<U: Fn(f64, f64) -> f64>(lay: &Layout, diff: &Csr, kappa: f64, g: f64, k: &[f64], u: &U, t: f64) -> Csr {
    let k2: f64 = k.iter().map(|x| x * x).sum();
    let yg = &lay.y_grid;
    let diag: Vec<f64> = (0..yg.len())
        .map(|i| {
            let y = yg.point(i);
            let s: f64 = k.iter().zip(&y).map(|(kj, yj)| kj * u(*yj, t)).sum();
            -kappa * k2 - 0.5 * g * g * s * s
        })
        .collect();
    diff.axpby(1.0, &Csr::diag(&diag), 1.0)
}

/// Ψ_N(x₁, y₁, …, x_N, y_N, t) for the white-noise closure of a shear flow.
#[allow(clippy::too_many_arguments)]
pub fn solve_shear_npoint(
    g: f64,
    kappa: f64,
    n: usize,
    field: &VelocityField,
    ic: &InitialCondition,
    grid: &GridSpec,
    t: f64,
    stepping: &TimeStepping,
) -> Result<ScalarField> {
    ClosureGenerator::white(kappa, g, field.clone())?;
    let u = shear_speed(field)?;
    let grid = grid.build()?;
    guard(&grid, n, 1)?;
    ic.validate(grid.dim())?;
    let lay = Layout::new(&grid, n)?;
    let ny = lay.y_grid.len();
    let mut data = transform_ic(&grid, &lay, ic);
    let diff = diffusion_operator(&lay.y_grid, kappa);
    // Real data: the mode at −k is the conjugate of the mode at k.
    let modes: Vec<(usize, Vec<f64>)> =
        active_modes(&lay, &data).into_iter().filter(|(xi, _)| *xi <= lay.conjugate(*xi)).collect();
    let solved: Vec<(usize, Vec<Vec<f64>>)> = modes
        .par_iter()
        .map(|(xi, k)| {
            let c = &data[xi * ny..(xi + 1) * ny];
            let parts = vec![c.iter().map(|z| z.re).collect(), c.iter().map(|z| z.im).collect()];
            let out = if field.is_steady() {
                stepping.integrate_batch(&mode_operator(&lay, &diff, kappa, g, k, &u, 0.0), parts, t)
            } else {
                stepping.integrate_varying_batch(|s| Ok(mode_operator(&lay, &diff, kappa, g, k, &u, s)), parts, 0.0, t)
            };
            out.map(|o| (*xi, o))
        })
        .collect::<Result<_>>()?;
    let active: Vec<bool> = {
        let mut a = vec![false; lay.nx()];
        solved.iter().for_each(|(xi, _)| {
            a[*xi] = true;
            a[lay.conjugate(*xi)] = true;
        });
        a
    };
    for xi in 0..lay.nx() {
        if !active[xi] {
            data[xi * ny..(xi + 1) * ny].iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        }
    }
    for (xi, parts) in solved {
        let xc = lay.conjugate(xi);
        for yi in 0..ny {
            let z = Complex64::new(parts[0][yi], parts[1][yi]);
            data[xi * ny + yi] = z;
            data[xc * ny + yi] = z.conj();
        }
    }
    let out = ScalarField::new(grid.clone(), inverse_to_grid(&grid, &lay, data))?;
    out.assert_boundary_decay(BOUNDARY_TOLERANCE)?;
    Ok(out)
}

/// OU closure of a planar shear in the Fourier-reduced form.
///
/// Writing the Hermite coefficients of each Fourier mode as a_n = iⁿ b_n turns the
/// coupling ik·u(y) into a real operator, so every mode is a real system of size
/// M × n_y: ∂_t b_n = κ(∂_y² − k²)b_n − γn b_n − g√γ k u(y)(√(n/2) b_{n−1} − √((n+1)/2) b_{n+1}).
pub fn solve_ou_shear(
    gen: &ClosureGenerator,
    ic: &InitialCondition,
    grid: &GridSpec,
    t: f64,
    stepping: &TimeStepping,
) -> Result<OuSolution> {
    gen.validate()?;
    let gamma = match gen.mode {
        NoiseMode::Ou { gamma } => gamma,
        NoiseMode::White => return Err(invalid("expected an OU generator")),
    };
    let m = grid.hermite_order.ok_or_else(|| invalid("OU closure needs a Hermite order"))?;
    let u = shear_speed(&gen.field)?;
    let full = grid.build()?;
    guard(&full, 1, m)?;
    ic.validate(full.dim())?;
    let lay = Layout::new(&full, 1)?;
    let ny = lay.y_grid.len();
    let data = transform_ic(&full, &lay, ic);
    let diff = diffusion_operator(&lay.y_grid, gen.kappa);
    let modes = active_modes(&lay, &data);
    let stepping = stepping.resolving_rate(gamma);
    let build = |k: f64, s: f64| {
        let base = diff.axpby(1.0, &Csr::identity(ny), -gen.kappa * k * k);
        let speed: Vec<f64> = lay.y_grid.axes[0].nodes().iter().map(|&y| k * u(y, s)).collect();
        ou_system(&base, &Csr::diag(&speed), gen.g, gamma, m, -1.0)
    };
    let solved: Vec<(usize, Vec<Vec<f64>>)> = modes
        .par_iter()
        .map(|(xi, k)| {
            let c = &data[xi * ny..(xi + 1) * ny];
            let mut re = vec![0.0; ny * m];
            let mut im = vec![0.0; ny * m];
            for (yi, z) in c.iter().enumerate() {
                re[yi * m] = z.re;
                im[yi * m] = z.im;
            }
            let out = if gen.field.is_steady() {
                stepping.integrate_batch(&build(k[0], 0.0), vec![re, im], t)
            } else {
                stepping.integrate_varying_batch(|s| Ok(build(k[0], s)), vec![re, im], 0.0, t)
            };
            out.map(|o| (*xi, o))
        })
        .collect::<Result<_>>()?;
    let zero = Complex64::new(0.0, 0.0);
    let mut modes_hat = vec![vec![zero; lay.nx() * ny]; m];
    for (xi, parts) in solved {
        let re = deinterleave(&parts[0], m);
        let im = deinterleave(&parts[1], m);
        for nmode in 0..m {
            let phase = Complex64::i().powu(nmode as u32);
            for yi in 0..ny {
                modes_hat[nmode][xi * ny + yi] = phase * Complex64::new(re[nmode][yi], im[nmode][yi]);
            }
        }
    }
    let real: Vec<Vec<f64>> = modes_hat.into_iter().map(|d| inverse_to_grid(&full, &lay, d)).collect();
    finish(&full, real)
}

/// Streamwise periodic box of length `length` centred on the origin, for shear grids.
pub fn streamwise_axis(length: f64, points: usize) -> AxisSpec {
    AxisSpec::periodic_centered(length, points)
}
