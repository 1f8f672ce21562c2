//! Brownian paths, stationary Ornstein–Uhlenbeck paths and exponential time integrals.
//!
//! Every sample is a pure function of `(grid, seed, index)`: the generator is ChaCha8
//! keyed by `seed` with the path index selecting the stream, so ensembles can be
//! generated in any order or in parallel and still agree bit for bit.

use crate::error::{invalid, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Generator for path `index` of the ensemble keyed by `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[inline]
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform time grid `t_k = k dt`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGrid {
    dt: f64,
    n_steps: usize,
}

impl PathGrid {
    /// `n_steps = 0` is accepted and describes the trivial path `[0]`.
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("time step must be positive, got {dt}")));
        }
        Ok(PathGrid { dt, n_steps })
    }

    /// Grid with `n_steps` steps covering `[0, t_final]`.
    pub fn covering(t_final: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(invalid("covering grid needs at least one step"));
        }
        PathGrid::new(t_final / n_steps as f64, n_steps)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn t_final(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.dt * k as f64
    }
}

/// Sampled standard Brownian motion with `values[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub grid: PathGrid,
    pub values: Vec<f64>,
    pub seed: u64,
}

impl BrownianPath {
    /// Wraps explicit values, e.g. a deterministic test path.
    pub fn from_values(grid: PathGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_steps() + 1 {
            return Err(invalid(format!(
                "path has {} values for {} steps",
                values.len(),
                grid.n_steps()
            )));
        }
        Ok(BrownianPath { grid, values, seed: 0 })
    }

    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }

    /// Linear interpolation of the path at time `t ∈ [0, t_final]`.
    pub fn at(&self, t: f64) -> f64 {
        let x = (t / self.grid.dt()).clamp(0.0, self.grid.n_steps() as f64);
        let k = (x.floor() as usize).min(self.grid.n_steps().saturating_sub(1));
        if self.grid.n_steps() == 0 {
            return self.values[0];
        }
        let frac = x - k as f64;
        self.values[k] * (1.0 - frac) + self.values[k + 1] * frac
    }

    /// Path rescaled in amplitude, `c B`.
    pub fn scaled(&self, c: f64) -> BrownianPath {
        BrownianPath {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
            seed: self.seed,
        }
    }
}

pub fn brownian_path(grid: PathGrid, seed: u64) -> BrownianPath {
    brownian_path_indexed(grid, seed, 0)
}

/// Path number `index` of the ensemble keyed by `seed`.
pub fn brownian_path_indexed(grid: PathGrid, seed: u64, index: u64) -> BrownianPath {
    let mut rng = path_rng(seed, index);
    let sd = grid.dt().sqrt();
    let mut values = Vec::with_capacity(grid.n_steps() + 1);
    let mut b = 0.0;
    values.push(b);
    for _ in 0..grid.n_steps() {
        b += sd * normal(&mut rng);
        values.push(b);
    }
    BrownianPath { grid, values, seed }
}

/// Damping `gamma` and dispersion `sigma` of dξ = −γξ dt + σ dW.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuParams {
    gamma: f64,
    sigma: f64,
}

impl OuParams {
    /// `sigma = 0` is allowed and gives the zero process.
    pub fn new(gamma: f64, sigma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid(format!("OU damping must be positive, got {gamma}")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(invalid(format!("OU dispersion must be non-negative, got {sigma}")));
        }
        Ok(OuParams { gamma, sigma })
    }

    /// Parameters with white-noise amplitude `g = σ/γ` held fixed.
    pub fn with_amplitude(g: f64, gamma: f64) -> Result<Self> {
        OuParams::new(gamma, g * gamma)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn g(&self) -> f64 {
        self.sigma / self.gamma
    }

    /// Stationary variance σ²/2γ.
    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.gamma)
    }

    pub fn covariance(&self, lag: f64) -> f64 {
        self.variance() * (-self.gamma * lag.abs()).exp()
    }
}

/// Stationary OU path sampled with the exact transition.
#[derive(Debug, Clone, PartialEq)]
pub struct OuPath {
    pub grid: PathGrid,
    pub values: Vec<f64>,
}

pub fn ou_path(params: OuParams, grid: PathGrid, seed: u64) -> OuPath {
    ou_path_indexed(params, grid, seed, 0)
}

pub fn ou_path_indexed(params: OuParams, grid: PathGrid, seed: u64, index: u64) -> OuPath {
    let mut rng = path_rng(seed, index);
    let a = (-params.gamma * grid.dt()).exp();
    let sd0 = params.variance().sqrt();
    // 1 - a² computed without cancellation for small γ dt.
    let sd = sd0 * (-(-2.0 * params.gamma * grid.dt()).exp_m1()).sqrt();
    let mut values = Vec::with_capacity(grid.n_steps() + 1);
    let mut xi = sd0 * normal(&mut rng);
    values.push(xi);
    for _ in 0..grid.n_steps() {
        xi = a * xi + sd * normal(&mut rng);
        values.push(xi);
    }
    OuPath { grid, values }
}

impl OuPath {
    /// Trapezoid integral ∫₀ᵗ ξ ds over the whole grid.
    pub fn integral(&self) -> f64 {
        let v = &self.values;
        let n = v.len();
        if n < 2 {
            return 0.0;
        }
        let inner: f64 = v[1..n - 1].iter().sum();
        self.grid.dt() * (inner + 0.5 * (v[0] + v[n - 1]))
    }
}

/// Sign of the exponent in ∫ e^{±2B^{(μ)}} ds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Time integral of an exponentiated Brownian functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbmIntegralSample {
    /// The integral itself; infinite when `saturated`.
    pub a: f64,
    /// Natural logarithm of the integral, always finite.
    pub log_a: f64,
    pub mu: f64,
    pub t: f64,
    /// Set when the integral overflows `f64`.
    pub saturated: bool,
}

/// Trapezoid rule for log ∫ exp(scale·B_s + drift·s) ds, evaluated with a
/// log-sum-exp shift so that paths with huge excursions stay representable.
pub fn log_exp_integral(path: &BrownianPath, scale: f64, drift: f64) -> f64 {
    let dt = path.grid.dt();
    let n = path.values.len();
    if n < 2 {
        return f64::NEG_INFINITY;
    }
    let expo = |k: usize| scale * path.values[k] + drift * dt * k as f64;
    let peak = (0..n).map(expo).fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for k in 0..n {
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        sum += w * (expo(k) - peak).exp();
    }
    peak + (sum * dt).ln()
}

/// A_t^{(μ)} = ∫₀ᵗ exp(±2(B_s + μ s)) ds by the trapezoid rule.
pub fn gbm_integral(path: &BrownianPath, mu: f64, sign: Sign) -> GbmIntegralSample {
    let s = 2.0 * sign.value();
    let log_a = log_exp_integral(path, s, s * mu);
    let a = log_a.exp();
    GbmIntegralSample { a, log_a, mu, t: path.grid.t_final(), saturated: !a.is_finite() }
}

/// ∫₀ᵗ e^{−2gB(s)} ds, the integral appearing in the strain-flow realization.
pub fn strain_integral(path: &BrownianPath, g: f64) -> f64 {
    log_exp_integral(path, -2.0 * g, 0.0).exp()
}

/// X_t = (4πκ ∫₀ᵗ e^{−2gB} ds)^{-1/2}: the strain-flow scalar at the origin for a
/// delta source at the origin.
pub fn x_from_strain_integral(kappa: f64, integral: f64) -> f64 {
    (4.0 * std::f64::consts::PI * kappa * integral).sqrt().recip()
}

/// X_t = g (4π A_{g²t})^{-1/2}, the same quantity (at κ = 1) written through the
/// driftless GBM integral at the rescaled time g²t.
pub fn x_from_gbm(g: f64, a_rescaled: f64) -> f64 {
    g * (4.0 * std::f64::consts::PI * a_rescaled).sqrt().recip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Accumulator;

    #[test]
    fn zero_step_grid_gives_origin() {
        let p = brownian_path(PathGrid::new(0.1, 0).unwrap(), 3);
        assert_eq!(p.values, vec![0.0]);
    }

    #[test]
    fn invalid_grid_rejected() {
        assert!(PathGrid::new(0.0, 10).is_err());
        assert!(PathGrid::new(-1.0, 10).is_err());
        assert!(PathGrid::new(f64::NAN, 10).is_err());
    }

    #[test]
    fn deterministic_per_seed_and_index() {
        let g = PathGrid::new(0.01, 100).unwrap();
        assert_eq!(brownian_path(g, 42).values, brownian_path(g, 42).values);
        assert_ne!(brownian_path(g, 42).values, brownian_path(g, 43).values);
        assert_ne!(
            brownian_path_indexed(g, 42, 0).values,
            brownian_path_indexed(g, 42, 1).values
        );
    }

    #[test]
    fn increment_variance_chi_square() {
        let dt = 0.01;
        let n = 100_000;
        let p = brownian_path(PathGrid::new(dt, n).unwrap(), 7);
        let acc: Accumulator = p.increments().map(|d| d * d).collect();
        // Var(d²) = 2 dt² for d ~ N(0, dt).
        let se = (2.0 * dt * dt / n as f64).sqrt();
        assert!((acc.mean() - dt).abs() < 3.0 * se, "mean sq {}", acc.mean());
    }

    #[test]
    fn ou_zero_sigma_is_zero() {
        let p = ou_path(OuParams::new(2.0, 0.0).unwrap(), PathGrid::new(0.1, 20).unwrap(), 1);
        assert!(p.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ou_stationary_statistics() {
        let params = OuParams::new(2.0, 1.5).unwrap();
        let grid = PathGrid::new(0.05, 10).unwrap();
        let lag_steps = 6;
        let tau = grid.time(lag_steps);
        let (mut v0, mut cov) = (Accumulator::new(), Accumulator::new());
        for i in 0..10_000 {
            let p = ou_path_indexed(params, grid, 11, i);
            v0.push(p.values[0] * p.values[0]);
            cov.push(p.values[2] * p.values[2 + lag_steps]);
        }
        let var = params.variance();
        assert!((v0.mean() - var).abs() < 3.0 * v0.std_error());
        assert!((cov.mean() - params.covariance(tau)).abs() < 3.0 * cov.std_error());
    }

    #[test]
    fn zero_path_integral_is_horizon() {
        let g = PathGrid::new(0.1, 25).unwrap();
        let p = BrownianPath::from_values(g, vec![0.0; 26]).unwrap();
        let s = gbm_integral(&p, 0.0, Sign::Plus);
        assert!((s.a - 2.5).abs() < 1e-14);
        assert!(!s.saturated);
    }

    #[test]
    fn huge_excursion_saturates_but_log_is_finite() {
        let g = PathGrid::new(1.0, 2).unwrap();
        let p = BrownianPath::from_values(g, vec![0.0, 400.0, 600.0]).unwrap();
        let s = gbm_integral(&p, 0.0, Sign::Plus);
        assert!(s.saturated);
        assert!(s.log_a.is_finite() && s.log_a > 1000.0);
    }

    #[test]
    fn gbm_mean_matches_closed_form() {
        let t = 1.0;
        let grid = PathGrid::covering(t, 200).unwrap();
        let mut acc = Accumulator::new();
        for i in 0..100_000 {
            acc.push(gbm_integral(&brownian_path_indexed(grid, 5, i), 0.0, Sign::Plus).a);
        }
        let exact = ((2.0 * t).exp() - 1.0) / 2.0;
        // Trapezoid bias is O(dt²) ≈ 1e-4 relative here, far below the error bar.
        assert!((acc.mean() - exact).abs() < 3.0 * acc.std_error(), "{} vs {exact}", acc.mean());
    }

    #[test]
    fn inverse_square_root_moment() {
        let grid = PathGrid::covering(1.0, 400).unwrap();
        let acc: Accumulator = (0..100_000)
            .map(|i| gbm_integral(&brownian_path_indexed(grid, 9, i), 0.0, Sign::Plus).a.powf(-0.5))
            .collect();
        assert!((acc.mean() - 1.0).abs() < 0.01, "{}", acc.mean());
    }
}
