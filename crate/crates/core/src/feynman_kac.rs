//! Monte Carlo solution of the random advection–diffusion equation
//! ∂ₜT + ξ(t) v·∇T = κΔT through backward particle trajectories.
//!
//! For one realization of the forcing, T(x, t) = E[T₀(X(t))] where X starts at x and
//! runs backward through the flow. White forcing ξ = g dB/dt enters as the shared
//! reversed increment g ΔB̃ with the Itô drift (g²/2)(∇v)v; Ornstein–Uhlenbeck forcing
//! enters as the reversed path value ξ(t − s). Ensemble means average the particle
//! estimate over independent realizations of ξ.

use crate::error::{invalid, Error, Result};
use crate::fields::VelocityField;
use crate::ic::InitialCondition;
use crate::noise::{brownian_path_indexed, normal, ou_path_indexed, path_rng, BrownianPath, OuParams, OuPath, PathGrid};
use crate::stats::Accumulator;
use rand::Rng;
use rayon::prelude::*;
use std::fmt::Write as _;

/// Largest tolerated share of non-finite particle samples.
pub const FLAGGED_LIMIT: f64 = 1e-3;

/// Key separating particle streams from forcing streams under the same base seed.
const PARTICLE_KEY: u64 = 0x9e37_79b9_7f4a_7c15;

/// Temporal forcing of the flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// ξ = g dB/dt.
    White { g: f64 },
    /// Stationary OU process; the white limit has g = σ/γ.
    Ou(OuParams),
}

impl NoiseModel {
    fn validate(&self) -> Result<()> {
        match self {
            NoiseModel::White { g } if !(g.is_finite() && *g >= 0.0) => {
                Err(invalid(format!("noise amplitude must be non-negative, got {g}")))
            }
            _ => Ok(()),
        }
    }

    /// min(1e-3, 0.01/γ) with γ = g² for white forcing.
    pub fn default_dt(&self) -> f64 {
        let rate = match self {
            NoiseModel::White { g } => g * g,
            NoiseModel::Ou(p) => p.gamma(),
        };
        if rate > 0.0 {
            (0.01 / rate).min(1e-3)
        } else {
            1e-3
        }
    }

    /// Realization `index` of the ensemble keyed by `seed`.
    pub fn sample(&self, grid: PathGrid, seed: u64, index: u64) -> NoisePath {
        match self {
            NoiseModel::White { .. } => NoisePath::White(brownian_path_indexed(grid, seed, index)),
            NoiseModel::Ou(p) => NoisePath::Ou(ou_path_indexed(*p, grid, seed, index)),
        }
    }
}

/// One sampled realization of the forcing.
#[derive(Debug, Clone, PartialEq)]
pub enum NoisePath {
    White(BrownianPath),
    Ou(OuPath),
}

impl NoisePath {
    pub fn grid(&self) -> PathGrid {
        match self {
            NoisePath::White(p) => p.grid,
            NoisePath::Ou(p) => p.grid,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportProblem {
    pub field: VelocityField,
    pub noise: NoiseModel,
    pub kappa: f64,
    pub initial_condition: InitialCondition,
    pub horizon: f64,
}

impl TransportProblem {
    pub fn new(
        field: VelocityField,
        noise: NoiseModel,
        kappa: f64,
        initial_condition: InitialCondition,
        horizon: f64,
    ) -> Result<Self> {
        let p = TransportProblem { field, noise, kappa, initial_condition, horizon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(invalid(format!("diffusivity must be non-negative, got {}", self.kappa)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid(format!("horizon must be positive, got {}", self.horizon)));
        }
        self.noise.validate()?;
        self.initial_condition.validate(self.field.dim())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSpec {
    pub n_realizations: usize,
    pub n_particles: usize,
    pub base_seed: u64,
    /// Particle step; `None` uses [`NoiseModel::default_dt`].
    pub dt: Option<f64>,
    /// Combine the step and the doubled step on shared increments, 2E_h − E_2h,
    /// which cancels the first-order weak error of Euler–Maruyama.
    pub extrapolate: bool,
}

impl EnsembleSpec {
    pub fn new(n_realizations: usize, n_particles: usize, base_seed: u64) -> Self {
        EnsembleSpec { n_realizations, n_particles, base_seed, dt: None, extrapolate: false }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_extrapolation(mut self) -> Self {
        self.extrapolate = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_realizations == 0 || self.n_particles == 0 {
            return Err(invalid("ensemble needs at least one realization and one particle"));
        }
        match self.dt {
            Some(dt) if !(dt > 0.0 && dt.is_finite()) => Err(invalid(format!("time step must be positive, got {dt}"))),
            _ => Ok(()),
        }
    }

    /// Uniform path grid on [0, horizon] whose step does not exceed the requested one.
    /// The step count is a multiple of `multiple`, doubled again when extrapolating.
    fn path_grid(&self, horizon: f64, noise: &NoiseModel, multiple: usize) -> Result<PathGrid> {
        let dt = self.dt.unwrap_or_else(|| noise.default_dt());
        let m = if self.extrapolate { 2 * multiple } else { multiple };
        let n = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
        PathGrid::covering(horizon, n.div_ceil(m) * m)
    }
}

/// Estimate at a single point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Non-finite samples excluded from the mean.
    pub flagged: usize,
    pub samples: usize,
}

/// Ensemble mean on a set of probe points.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldEstimate {
    pub points: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub flagged: usize,
    pub samples: usize,
}

impl FieldEstimate {
    /// Root mean square of the pointwise standard errors.
    pub fn pooled_std_error(&self) -> f64 {
        let n = self.std_error.len().max(1) as f64;
        (self.std_error.iter().map(|s| s * s).sum::<f64>() / n).sqrt()
    }

    /// L∞ distance to reference values at the same points.
    pub fn max_deviation(&self, reference: &[f64]) -> f64 {
        self.mean.iter().zip(reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Columns `x0,..,mean,stderr`.
    pub fn to_csv(&self) -> String {
        let d = self.points.first().map_or(0, Vec::len);
        let mut out = String::new();
        for i in 0..d {
            let _ = write!(out, "x{i},");
        }
        out.push_str("mean,stderr\n");
        for ((p, m), s) in self.points.iter().zip(&self.mean).zip(&self.std_error) {
            for x in p {
                let _ = write!(out, "{x:.16e},");
            }
            let _ = writeln!(out, "{m:.16e},{s:.16e}");
        }
        out
    }
}

/// Forcing seen by a particle at backward step k, on the interval [kh, (k+1)h].
enum Forcing {
    /// Coefficient g and reversed increments ΔB̃_k.
    White { g: f64, db: Vec<f64> },
    /// ξ(t − kh).
    Ou { xi: Vec<f64> },
}

impl Forcing {
    fn reversed(path: &NoisePath, noise: &NoiseModel, steps: usize) -> Forcing {
        match (path, noise) {
            (NoisePath::White(b), NoiseModel::White { g }) => {
                let v = &b.values;
                Forcing::White { g: *g, db: (0..steps).map(|k| v[steps - k] - v[steps - k - 1]).collect() }
            }
            (NoisePath::Ou(p), _) => Forcing::Ou { xi: (0..steps).map(|k| p.values[steps - k]).collect() },
            // A Brownian path under an OU model is not produced by this module.
            (NoisePath::White(b), NoiseModel::Ou(_)) => {
                let v = &b.values;
                Forcing::White { g: 1.0, db: (0..steps).map(|k| v[steps - k] - v[steps - k - 1]).collect() }
            }
        }
    }

    /// The same forcing on the doubled step.
    fn coarsened(&self) -> Forcing {
        match self {
            Forcing::White { g, db } => Forcing::White { g: *g, db: db.chunks(2).map(|c| c.iter().sum()).collect() },
            Forcing::Ou { xi } => Forcing::Ou { xi: xi.iter().step_by(2).copied().collect() },
        }
    }
}

/// Per-point particle statistics for one realization.
#[derive(Debug, Clone, Copy, Default)]
struct PointStats {
    fine: Accumulator,
    coarse: Accumulator,
    /// 2·fine − coarse per particle when extrapolating, otherwise the fine sample.
    combined: Accumulator,
    flagged: usize,
}

/// Backward Euler–Maruyama from a set of starting points driven by common particle
/// noise.
struct Kernel<'a> {
    problem: &'a TransportProblem,
    h: f64,
    steps: usize,
}

impl Kernel<'_> {
    #[allow(clippy::too_many_arguments)]
    fn step(&self, forcing: &Forcing, k: usize, h: f64, x: &mut [f64], dw: &[f64], v: &mut [f64], drift: &mut [f64]) {
        let p = self.problem;
        let tau = p.horizon - k as f64 * h;
        let amp = (2.0 * p.kappa).sqrt();
        p.field.evaluate_into(x, tau, v);
        match forcing {
            Forcing::White { g, db } => {
                p.field.drift_into(*g, x, tau, drift);
                let c = g * db[k];
                for i in 0..x.len() {
                    x[i] += h * drift[i] - c * v[i] + amp * dw[i];
                }
            }
            Forcing::Ou { xi } => {
                let c = h * xi[k];
                for i in 0..x.len() {
                    x[i] += amp * dw[i] - c * v[i];
                }
            }
        }
    }

    /// Particle statistics at each start for one realization. Each particle draws one
    /// set of increments shared by every start and by the coarse trajectory.
    fn realization<R: Rng>(&self, path: &NoisePath, starts: &[Vec<f64>], n: usize, extrapolate: bool, rng: &mut R) -> Vec<PointStats> {
        let d = self.problem.field.dim();
        let ic = &self.problem.initial_condition;
        let fine = Forcing::reversed(path, &self.problem.noise, self.steps);
        let coarse = extrapolate.then(|| fine.coarsened());
        let np = starts.len();
        let flat: Vec<f64> = starts.concat();
        let (mut xf, mut xc) = (flat.clone(), flat.clone());
        let (mut v, mut drift) = (vec![0.0; d], vec![0.0; d]);
        let (mut dw, mut dw_prev, mut dw2) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        let sh = self.h.sqrt();
        let mut stats = vec![PointStats::default(); np];
        for _ in 0..n {
            xf.copy_from_slice(&flat);
            xc.copy_from_slice(&flat);
            for k in 0..self.steps {
                for w in dw.iter_mut() {
                    *w = sh * normal(rng);
                }
                for x in xf.chunks_mut(d) {
                    self.step(&fine, k, self.h, x, &dw, &mut v, &mut drift);
                }
                if let Some(cf) = &coarse {
                    if k % 2 == 1 {
                        for i in 0..d {
                            dw2[i] = dw_prev[i] + dw[i];
                        }
                        for x in xc.chunks_mut(d) {
                            self.step(cf, k / 2, 2.0 * self.h, x, &dw2, &mut v, &mut drift);
                        }
                    } else {
                        dw_prev.copy_from_slice(&dw);
                    }
                }
            }
            for (j, st) in stats.iter_mut().enumerate() {
                let a = &xf[j * d..(j + 1) * d];
                let b = &xc[j * d..(j + 1) * d];
                let ok = a.iter().all(|x| x.is_finite()) && (!extrapolate || b.iter().all(|x| x.is_finite()));
                if !ok {
                    st.flagged += 1;
                    continue;
                }
                let f = ic.evaluate(a);
                st.fine.push(f);
                if extrapolate {
                    let c = ic.evaluate(b);
                    st.coarse.push(c);
                    st.combined.push(2.0 * f - c);
                } else {
                    st.combined.push(f);
                }
            }
        }
        stats
    }
}

fn check_flagged(flagged: usize, total: usize) -> Result<()> {
    if flagged as f64 > FLAGGED_LIMIT * total as f64 {
        return Err(Error::FlaggedSamples { flagged, total });
    }
    Ok(())
}

fn particle_rng(seed: u64, index: u64) -> rand_chacha::ChaCha8Rng {
    path_rng(seed ^ PARTICLE_KEY, index)
}

fn check_point(problem: &TransportProblem, x: &[f64]) -> Result<()> {
    if x.len() != problem.field.dim() {
        return Err(invalid(format!("point has dimension {}, field has {}", x.len(), problem.field.dim())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("point coordinates must be finite"));
    }
    Ok(())
}

/// Particle estimate of T(x, t) for one forcing realization. The path grid sets the
/// particle step and must end at the horizon.
pub fn solve_one_realization(
    problem: &TransportProblem,
    path: &NoisePath,
    x: &[f64],
    n_particles: usize,
    seed: u64,
) -> Result<PointEstimate> {
    problem.validate()?;
    check_point(problem, x)?;
    if n_particles == 0 {
        return Err(invalid("need at least one particle"));
    }
    let grid = path.grid();
    let steps = (problem.horizon / grid.dt()).round() as usize;
    if steps == 0 || steps > grid.n_steps() || (steps as f64 * grid.dt() - problem.horizon).abs() > 1e-9 * problem.horizon {
        return Err(invalid(format!(
            "path grid (dt {}, {} steps) does not end at the horizon {}",
            grid.dt(),
            grid.n_steps(),
            problem.horizon
        )));
    }
    if matches!((path, &problem.noise), (NoisePath::White(_), NoiseModel::Ou(_)) | (NoisePath::Ou(_), NoiseModel::White { .. })) {
        return Err(invalid("path type does not match the noise model"));
    }
    let kernel = Kernel { problem, h: grid.dt(), steps };
    let st = kernel.realization(path, &[x.to_vec()], n_particles, false, &mut particle_rng(seed, 0))[0];
    check_flagged(st.flagged, n_particles)?;
    Ok(PointEstimate { mean: st.fine.mean(), std_error: st.fine.std_error(), flagged: st.flagged, samples: n_particles })
}

/// Mean over forcing realizations and particles at each point, with standard errors
/// from the spread of realization means. Every particle path is shared by all points.
pub fn ensemble_mean(problem: &TransportProblem, spec: &EnsembleSpec, points: &[Vec<f64>]) -> Result<FieldEstimate> {
    problem.validate()?;
    spec.validate()?;
    for p in points {
        check_point(problem, p)?;
    }
    let grid = spec.path_grid(problem.horizon, &problem.noise, 1)?;
    let kernel = Kernel { problem, h: grid.dt(), steps: grid.n_steps() };
    let per: Vec<Vec<PointStats>> = (0..spec.n_realizations as u64)
        .into_par_iter()
        .map(|r| {
            let path = problem.noise.sample(grid, spec.base_seed, r);
            kernel.realization(&path, points, spec.n_particles, spec.extrapolate, &mut particle_rng(spec.base_seed, r))
        })
        .collect();
    let np = points.len();
    let total = spec.n_realizations * spec.n_particles * np;
    let flagged: usize = per.iter().flatten().map(|s| s.flagged).sum();
    check_flagged(flagged, total)?;
    let mut mean = Vec::with_capacity(np);
    let mut std_error = Vec::with_capacity(np);
    for j in 0..np {
        if spec.n_realizations == 1 {
            mean.push(per[0][j].combined.mean());
            std_error.push(per[0][j].combined.std_error());
        } else {
            let a: Accumulator = per.iter().map(|r| r[j].combined.mean()).collect();
            mean.push(a.mean());
            std_error.push(a.std_error());
        }
    }
    Ok(FieldEstimate { points: points.to_vec(), mean, std_error, flagged, samples: total })
}

/// E[∏ⱼ T(xⱼ, t)]: per realization, independent particle estimates at each point are
/// multiplied, then averaged over realizations.
pub fn npoint_correlator_mc(problem: &TransportProblem, points: &[Vec<f64>], spec: &EnsembleSpec) -> Result<PointEstimate> {
    problem.validate()?;
    spec.validate()?;
    if points.is_empty() {
        return Err(invalid("correlator needs at least one point"));
    }
    for p in points {
        check_point(problem, p)?;
    }
    let grid = spec.path_grid(problem.horizon, &problem.noise, 1)?;
    let kernel = Kernel { problem, h: grid.dt(), steps: grid.n_steps() };
    let per: Vec<(f64, usize)> = (0..spec.n_realizations as u64)
        .into_par_iter()
        .map(|r| {
            let path = problem.noise.sample(grid, spec.base_seed, r);
            let mut rng = particle_rng(spec.base_seed, r);
            let (mut fine, mut coarse, mut flagged) = (1.0, 1.0, 0);
            // A fresh particle set per point keeps the factors conditionally independent.
            for p in points {
                let st = kernel.realization(&path, std::slice::from_ref(p), spec.n_particles, spec.extrapolate, &mut rng)[0];
                flagged += st.flagged;
                fine *= st.fine.mean();
                coarse *= st.coarse.mean();
            }
            let value = if spec.extrapolate { 2.0 * fine - coarse } else { fine };
            (value, flagged)
        })
        .collect();
    let total = spec.n_realizations * spec.n_particles * points.len();
    let flagged = per.iter().map(|p| p.1).sum();
    check_flagged(flagged, total)?;
    let a: Accumulator = per.iter().map(|p| p.0).collect();
    let std_error = if spec.n_realizations > 1 { a.std_error() } else { 0.0 };
    Ok(PointEstimate { mean: a.mean(), std_error, flagged, samples: total })
}

/// Long-time particle dispersion in cell units for the nondimensional closure
/// Δ + Pe²(v·∇)².
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionEstimate {
    /// Row-major d×d rate (Cov(t) − Cov(t/2))/t.
    pub rate: Vec<f64>,
    pub std_error: Vec<f64>,
    /// The same estimator over [t/4, t/2].
    pub rate_half: Vec<f64>,
    /// Largest (rate − rate_half)/(t/2) over the diagonal.
    pub trend_slope: f64,
    /// Set when the two windows disagree by more than three standard errors.
    pub warning: Option<String>,
}

/// Displacement covariance rate of particles started uniformly in one cell, each with
/// its own white forcing: dX = √2 Pe v∘dB + √2 dW, the Stratonovich form of
/// dX = Pe²(∇v)v dt + √2 Pe v dB + √2 dW. Steps split the diffusion around the
/// streamline flow, which stays accurate when Pe²|v|²dt is not small against the cell
/// size (Euler–Maruyama is strongly biased there). Realizations act as independent
/// batches of `n_particles` for the error bars.
pub fn effective_dispersion_mc(field: &VelocityField, pe: f64, horizon: f64, spec: &EnsembleSpec) -> Result<DispersionEstimate> {
    spec.validate()?;
    if !(pe >= 0.0 && pe.is_finite()) {
        return Err(invalid(format!("Péclet number must be non-negative, got {pe}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid(format!("horizon must be positive, got {horizon}")));
    }
    let period = field.spatial_period().ok_or_else(|| invalid("dispersion needs a periodic field"))?;
    if !field.divergence_free() {
        return Err(invalid("dispersion needs a divergence-free field"));
    }
    if spec.n_realizations < 2 {
        return Err(invalid("dispersion error bars need at least two batches"));
    }
    let g = std::f64::consts::SQRT_2 * pe;
    let noise = NoiseModel::White { g };
    let grid = spec.path_grid(horizon, &noise, 4)?;
    let d = field.dim();
    let (h, steps) = (grid.dt(), grid.n_steps());
    let marks = [steps / 4, steps / 2, steps];
    let batches: Vec<[Vec<f64>; 2]> = (0..spec.n_realizations as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = particle_rng(spec.base_seed, r);
            let mut model = [vec![0.0; 3 * d * spec.n_particles], vec![0.0; 3 * d * spec.n_particles]];
            let mut scratch = FlowScratch::new(d);
            let mut x = vec![0.0; d];
            let mut xc = vec![0.0; d];
            for p in 0..spec.n_particles {
                for i in 0..d {
                    x[i] = period[i] * rng.random::<f64>();
                }
                xc.copy_from_slice(&x);
                let x0 = x.clone();
                let (mut db_prev, mut w_prev) = (0.0, vec![0.0; d]);
                let (mut w1, mut w2, mut wc) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
                let mut m = 0;
                for k in 0..steps {
                    let db = h.sqrt() * normal(&mut rng);
                    for i in 0..d {
                        w1[i] = (0.5 * h).sqrt() * normal(&mut rng);
                        w2[i] = (0.5 * h).sqrt() * normal(&mut rng);
                    }
                    split_step(field, g, (k as f64 + 0.5) * h, &mut x, db, &w1, &w2, &mut scratch);
                    if spec.extrapolate {
                        if k % 2 == 1 {
                            for i in 0..d {
                                wc[i] = w1[i] + w2[i];
                            }
                            split_step(field, g, k as f64 * h, &mut xc, db + db_prev, &w_prev, &wc, &mut scratch);
                        } else {
                            db_prev = db;
                            for i in 0..d {
                                w_prev[i] = w1[i] + w2[i];
                            }
                        }
                    }
                    if k + 1 == marks[m] {
                        for i in 0..d {
                            model[0][(p * 3 + m) * d + i] = x[i] - x0[i];
                            model[1][(p * 3 + m) * d + i] = xc[i] - x0[i];
                        }
                        m = (m + 1).min(2);
                    }
                }
            }
            let fine = window_rates(&model[0], spec.n_particles, d, horizon);
            let value = if spec.extrapolate {
                let coarse = window_rates(&model[1], spec.n_particles, d, horizon);
                fine.iter().zip(&coarse).map(|(f, c)| 2.0 * f - c).collect()
            } else {
                fine
            };
            let (late, early) = value.split_at(d * d);
            [late.to_vec(), early.to_vec()]
        })
        .collect();
    if batches.iter().any(|b| b.iter().flatten().any(|v| !v.is_finite())) {
        return Err(Error::FlaggedSamples { flagged: 1, total: spec.n_realizations });
    }
    let stat = |w: usize, e: usize| -> Accumulator { batches.iter().map(|b| b[w][e]).collect() };
    let rate: Vec<f64> = (0..d * d).map(|e| stat(0, e).mean()).collect();
    let std_error: Vec<f64> = (0..d * d).map(|e| stat(0, e).std_error()).collect();
    let rate_half: Vec<f64> = (0..d * d).map(|e| stat(1, e).mean()).collect();
    let half_se: Vec<f64> = (0..d * d).map(|e| stat(1, e).std_error()).collect();
    let mut trend_slope = 0.0f64;
    let mut warning = None;
    for i in 0..d {
        let e = i * d + i;
        let diff = rate[e] - rate_half[e];
        if diff.abs() > trend_slope.abs() * 0.5 * horizon {
            trend_slope = diff / (0.5 * horizon);
        }
        let tol = 3.0 * (std_error[e].powi(2) + half_se[e].powi(2)).sqrt();
        if diff.abs() > tol {
            warning = Some(format!(
                "rate not converged in component {i}: {:.4} over [t/2, t] vs {:.4} over [t/4, t/2], trend slope {:.3e}",
                rate[e], rate_half[e], diff / (0.5 * horizon)
            ));
        }
    }
    Ok(DispersionEstimate { rate, std_error, rate_half, trend_slope, warning })
}

#[allow(clippy::too_many_arguments)]
/// Work buffers for the streamline flow.
struct FlowScratch {
    k: [Vec<f64>; 4],
    y: Vec<f64>,
}

impl FlowScratch {
    fn new(d: usize) -> Self {
        FlowScratch { k: std::array::from_fn(|_| vec![0.0; d]), y: vec![0.0; d] }
    }
}

/// Largest RK4 substep, measured in units of the inverse local velocity gradient.
const FLOW_SUBSTEP: f64 = 0.25;

/// One Strang step of dX = g v∘dB + √2 dW: half the diffusion, the streamline flow
/// of v over the random time g·ΔB, the other half. The flow is integrated with RK4
/// using substeps short against the local velocity gradient.
#[allow(clippy::too_many_arguments)]
fn split_step(field: &VelocityField, g: f64, t: f64, x: &mut [f64], db: f64, w1: &[f64], w2: &[f64], sc: &mut FlowScratch) {
    let d = x.len();
    for i in 0..d {
        x[i] += std::f64::consts::SQRT_2 * w1[i];
    }
    let s = g * db;
    let jac = field.jacobian(x, t);
    let lip = (0..d).map(|r| (0..d).map(|c| jac[r * d + c].abs()).sum::<f64>()).fold(0.0, f64::max);
    let n = ((s.abs() * lip / FLOW_SUBSTEP).ceil() as usize).clamp(1, 256);
    let hs = s / n as f64;
    for _ in 0..n {
        field.evaluate_into(x, t, &mut sc.k[0]);
        for stage in 1..4 {
            let c = if stage == 3 { hs } else { 0.5 * hs };
            for i in 0..d {
                sc.y[i] = x[i] + c * sc.k[stage - 1][i];
            }
            field.evaluate_into(&sc.y, t, &mut sc.k[stage]);
        }
        for i in 0..d {
            x[i] += hs / 6.0 * (sc.k[0][i] + 2.0 * sc.k[1][i] + 2.0 * sc.k[2][i] + sc.k[3][i]);
        }
    }
    for i in 0..d {
        x[i] += std::f64::consts::SQRT_2 * w2[i];
    }
}

/// Rates over [t/2, t] then [t/4, t/2] from displacements stored per particle at the
/// three marks.
fn window_rates(disp: &[f64], n: usize, d: usize, t: f64) -> Vec<f64> {
    let cov = |m: usize| -> Vec<f64> {
        let mut mean = vec![0.0; d];
        for p in 0..n {
            for i in 0..d {
                mean[i] += disp[(p * 3 + m) * d + i] / n as f64;
            }
        }
        let mut c = vec![0.0; d * d];
        for p in 0..n {
            let x = &disp[(p * 3 + m) * d..(p * 3 + m + 1) * d];
            for i in 0..d {
                for j in 0..d {
                    c[i * d + j] += (x[i] - mean[i]) * (x[j] - mean[j]);
                }
            }
        }
        let denom = (n.max(2) - 1) as f64;
        c.iter().map(|v| v / denom).collect()
    };
    let (c1, c2, c4) = (cov(0), cov(1), cov(2));
    let late = c4.iter().zip(&c2).map(|(a, b)| (a - b) / t);
    let early = c2.iter().zip(&c1).map(|(a, b)| (a - b) / (0.5 * t));
    late.chain(early).collect()
}
