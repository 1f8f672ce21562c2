//! Reproducible cross-checks composed from the solver modules.
//!
//! Every experiment takes a serde-configurable parameter block and a base seed and
//! returns named checks (measured value, target, tolerance) together with CSV tables.
//! Defaults reproduce the reference runs.

use crate::closure::{
    evolve_white_closure, solve_ou_shear, solve_shear_npoint, solve_white_closure, strain_delta_closure,
    strain_exact, streamwise_axis, white_operator, AxisSpec, ClosureGenerator, GridSpec, ScalarField, TimeScheme,
    TimeStepping,
};
use crate::error::{invalid, Error, Result};
use crate::feynman_kac::{effective_dispersion_mc, ensemble_mean, EnsembleSpec, NoiseModel, TransportProblem};
use crate::fields::field_by_name;
use crate::gbm::{
    a_moment, dufresne_moment, inverse_moment_asymptotic, inverse_moment_coth, normalized_central, x_statistics_mc,
    McSettings,
};
use crate::homogenize::{effective_tensor, npoint_tensor, shear_shortcut, solve_cell_problem, CellProblem};
use crate::ic::{richardson_vec, InitialCondition, Profile};
use crate::noise::{brownian_path_indexed, ou_path_indexed, OuParams, PathGrid};
use crate::propagator::{averaged_by_raw_order, averaged_propagator_exact, averaged_series, raw_wick_expansion, CMatrix, MatrixFunction, OperatorFamily};
use crate::stats::loglog_fit;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 20240611;

/// One measured quantity compared against its target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub expected: f64,
    /// Largest accepted |measured − expected|.
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    pub fn within(name: impl Into<String>, measured: f64, expected: f64, tolerance: f64) -> Check {
        let passed = (measured - expected).abs() <= tolerance;
        Check { name: name.into(), measured, expected, tolerance, passed }
    }

    /// measured ≤ bound, recorded with target 0.
    pub fn at_most(name: impl Into<String>, measured: f64, bound: f64) -> Check {
        Check { name: name.into(), measured, expected: 0.0, tolerance: bound, passed: measured <= bound }
    }
}

/// A named CSV output.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn csv(header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = format!("{header}\n");
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (a + b)];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

/// Monte Carlo ensemble size and step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub realizations: usize,
    pub particles: usize,
    pub dt: f64,
    #[serde(default = "yes")]
    pub extrapolate: bool,
}

fn yes() -> bool {
    true
}

impl EnsembleConfig {
    fn spec(&self, seed: u64) -> EnsembleSpec {
        let s = EnsembleSpec::new(self.realizations, self.particles, seed).with_dt(self.dt);
        if self.extrapolate {
            s.with_extrapolation()
        } else {
            s
        }
    }
}

/// Closure solution on the coarse grid of `spec` extrapolated against the solution on
/// a grid whose truncated axes are refined (nodes nest at odd fine indices).
fn space_extrapolated<F>(spec: &GridSpec, solve: F) -> Result<ScalarField>
where
    F: Fn(&GridSpec) -> Result<ScalarField>,
{
    let fine_spec = GridSpec {
        axes: spec.axes.iter().map(|a| if a.is_periodic() { a.clone() } else { a.refined() }).collect(),
        hermite_order: spec.hermite_order,
    };
    let coarse = solve(spec)?;
    let fine = solve(&fine_spec)?;
    let fshape = fine.grid.shape();
    let restricted: Vec<f64> = (0..coarse.values.len())
        .map(|i| {
            let m = coarse.grid.multi_index(i);
            let mut idx = 0;
            for (a, &mi) in m.iter().enumerate() {
                let fi = if spec.axes[a].is_periodic() { mi } else { 2 * mi + 1 };
                idx = idx * fshape[a] + fi;
            }
            fine.values[idx]
        })
        .collect();
    ScalarField::new(coarse.grid.clone(), richardson_vec(&coarse.values, &restricted, 2))
}

// ---------------------------------------------------------------------------------

/// Point source in the one-dimensional random strain: closure, closed form and
/// optionally Monte Carlo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrainConfig {
    pub t: f64,
    pub kappa: f64,
    pub g: f64,
    /// Truncated window [−half_width, half_width] with a sinh stretch.
    pub half_width: f64,
    pub points: usize,
    pub stretch: f64,
    /// Closure source width; the width and its half are extrapolated.
    pub source_width: f64,
    pub dt: f64,
    /// Comparison window |x| ≤ window.
    pub window: f64,
    pub tolerance: f64,
    pub probes: usize,
    /// Monte Carlo source width (extrapolated like the closure); realizations = 0
    /// disables the Monte Carlo column.
    pub mc_source_width: f64,
    pub mc: EnsembleConfig,
}

impl Default for StrainConfig {
    fn default() -> Self {
        StrainConfig {
            t: 1.0,
            kappa: 1.0,
            g: 1.0,
            half_width: 1500.0,
            points: 799,
            stretch: 0.05,
            source_width: 0.04,
            dt: 1e-3,
            window: 5.0,
            tolerance: 1e-5,
            probes: 41,
            mc_source_width: 0.2,
            mc: EnsembleConfig { realizations: 1000, particles: 100, dt: 0.01, extrapolate: true },
        }
    }
}

impl StrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (n, v) in [
            ("t", self.t),
            ("kappa", self.kappa),
            ("half_width", self.half_width),
            ("stretch", self.stretch),
            ("source_width", self.source_width),
            ("dt", self.dt),
            ("window", self.window),
            ("tolerance", self.tolerance),
        ] {
            positive(n, v)?;
        }
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(invalid(format!("g must be non-negative, got {}", self.g)));
        }
        if self.window >= self.half_width {
            return Err(invalid("comparison window must lie inside the grid"));
        }
        if self.mc.realizations > 0 {
            positive("mc_source_width", self.mc_source_width)?;
            positive("mc.dt", self.mc.dt)?;
        }
        Ok(())
    }
}

pub fn run_strain(cfg: &StrainConfig, seed: u64) -> Result<Outcome> {
    cfg.validate()?;
    let axis = AxisSpec::stretched(-cfg.half_width, cfg.half_width, cfg.points, cfg.stretch);
    let stepping = TimeStepping::new(cfg.dt, TimeScheme::TrBdf2).with_richardson();
    let sol = strain_delta_closure(cfg.kappa, cfg.g, cfg.t, &axis, cfg.source_width, &stepping)?;
    let exact = |x: f64| strain_exact(x, cfg.t, cfg.kappa, cfg.g);
    let mut err = 0.0f64;
    for (i, &x) in sol.grid.axes[0].nodes().iter().enumerate() {
        if x.abs() <= cfg.window {
            err = err.max((sol.values[i] - exact(x)?).abs());
        }
    }
    let mut out = Outcome::default();
    out.checks.push(Check::at_most("closure vs closed form, max |Δ| on window", err, cfg.tolerance));
    out.checks.push(Check::within("closure at x = 0", sol.value_at(&[0.0]), exact(0.0)?, cfg.tolerance));
    if (cfg.t, cfg.kappa, cfg.g) == (1.0, 1.0, 1.0) {
        out.checks.push(Check::within("closure at x = 1", sol.value_at(&[1.0]), 0.2271, 5e-5));
    }

    let xs = linspace(-cfg.window, cfg.window, cfg.probes);
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for &x in &xs {
        cols.push(vec![x, exact(x)?, sol.value_at(&[x])]);
    }
    let mut header = String::from("x,exact,closure");
    if cfg.mc.realizations > 0 {
        let field = field_by_name("strain_1d")?;
        let pts: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let spec = cfg.mc.spec(seed);
        let est = |w: f64| {
            let p = TransportProblem::new(field.clone(), NoiseModel::White { g: cfg.g }, cfg.kappa, InitialCondition::gaussian(vec![0.0], w), cfg.t)?;
            ensemble_mean(&p, &spec, &pts)
        };
        let (wide, narrow) = (est(cfg.mc_source_width)?, est(0.5 * cfg.mc_source_width)?);
        let mean = richardson_vec(&wide.mean, &narrow.mean, 2);
        // Triangle bound on the extrapolated standard error.
        let se: Vec<f64> = wide.std_error.iter().zip(&narrow.std_error).map(|(w, n)| (4.0 * n + w) / 3.0).collect();
        let pooled = (se.iter().map(|s| s * s).sum::<f64>() / se.len() as f64).sqrt();
        let dev = cols.iter().zip(&mean).map(|(c, m)| (c[1] - m).abs()).fold(0.0, f64::max);
        out.checks.push(Check::at_most("Monte Carlo vs closed form, L∞ / pooled standard error", dev / pooled, 3.0));
        for ((c, m), s) in cols.iter_mut().zip(&mean).zip(&se) {
            c.extend([*m, *s]);
        }
        header.push_str(",mc,mc_stderr");
    }
    out.tables.push(Table { name: "strain.csv".into(), csv: csv(&header, cols) });
    Ok(out)
}

// ---------------------------------------------------------------------------------

/// Ensemble Monte Carlo against the white-noise closure for linear shear (2D) and the
/// one-dimensional strain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McVsClosureConfig {
    pub t: f64,
    pub g: f64,
    pub kappa: f64,
    /// Gaussian initial width.
    pub width: f64,
    pub shear: bool,
    pub strain: bool,
    pub shear_ensemble: EnsembleConfig,
    pub strain_ensemble: EnsembleConfig,
    /// L∞ deviation allowed, in pooled standard errors.
    pub sigmas: f64,
}

impl Default for McVsClosureConfig {
    fn default() -> Self {
        McVsClosureConfig {
            t: 0.5,
            g: 1.0,
            kappa: 0.5,
            width: 0.5,
            shear: true,
            strain: true,
            shear_ensemble: EnsembleConfig { realizations: 10_000, particles: 1_000, dt: 0.05, extrapolate: true },
            strain_ensemble: EnsembleConfig { realizations: 10_000, particles: 1_000, dt: 0.02, extrapolate: true },
            sigmas: 3.0,
        }
    }
}

impl McVsClosureConfig {
    pub fn validate(&self) -> Result<()> {
        for (n, v) in [("t", self.t), ("kappa", self.kappa), ("width", self.width), ("sigmas", self.sigmas)] {
            positive(n, v)?;
        }
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(invalid(format!("g must be non-negative, got {}", self.g)));
        }
        for e in [self.shear_ensemble, self.strain_ensemble] {
            positive("ensemble dt", e.dt)?;
            if e.realizations < 2 || e.particles == 0 {
                return Err(invalid("ensembles need at least two realizations and one particle"));
            }
        }
        if !self.shear && !self.strain {
            return Err(invalid("enable at least one of shear and strain"));
        }
        Ok(())
    }
}

/// The 33 probe points: an 11 × 3 lattice for shear, a line for strain.
fn probes(case: &str) -> Vec<Vec<f64>> {
    match case {
        "shear" => {
            let mut p = Vec::new();
            for y in [-0.75, 0.0, 0.75] {
                for x in linspace(-1.5, 1.5, 11) {
                    p.push(vec![x, y]);
                }
            }
            p
        }
        _ => linspace(-2.0, 2.0, 33).into_iter().map(|x| vec![x]).collect(),
    }
}

pub fn run_mc_vs_closure(cfg: &McVsClosureConfig, seed: u64) -> Result<Outcome> {
    cfg.validate()?;
    let mut out = Outcome::default();
    let mut cases = Vec::new();
    if cfg.shear {
        cases.push("shear");
    }
    if cfg.strain {
        cases.push("strain");
    }
    for case in cases {
        let (field, ic, ens, closure) = match case {
            "shear" => {
                let field = field_by_name("linear_shear")?;
                let ic = InitialCondition::gaussian(vec![0.0, 0.0], cfg.width);
                let spread = 6.0 * (cfg.width * cfg.width + 2.0 * cfg.kappa * cfg.t).sqrt();
                let grid = GridSpec::new(vec![
                    streamwise_axis(8.0 * spread, 128),
                    AxisSpec::truncated(-2.0 * spread, 2.0 * spread, 161),
                ]);
                let st = TimeStepping::new(1e-2, TimeScheme::CrankNicolson).with_richardson();
                let f2 = field.clone();
                let ic2 = ic.clone();
                let sol = space_extrapolated(&grid, |g| solve_shear_npoint(cfg.g, cfg.kappa, 1, &f2, &ic2, g, cfg.t, &st))?;
                (field, ic, cfg.shear_ensemble, sol)
            }
            _ => {
                let field = field_by_name("strain_1d")?;
                let ic = InitialCondition::gaussian(vec![0.0], cfg.width);
                let gen = ClosureGenerator::white(cfg.kappa, cfg.g, field.clone())?;
                let grid = GridSpec::new(vec![AxisSpec::stretched(-400.0, 400.0, 801, 0.1)]);
                let st = TimeStepping::new(1e-3, TimeScheme::TrBdf2).with_richardson();
                let sol = space_extrapolated(&grid, |g| solve_white_closure(&gen, &ic, g, cfg.t, &st))?;
                (field, ic, cfg.strain_ensemble, sol)
            }
        };
        let pts = probes(case);
        let problem = TransportProblem::new(field, NoiseModel::White { g: cfg.g }, cfg.kappa, ic, cfg.t)?;
        let est = ensemble_mean(&problem, &ens.spec(seed), &pts)?;
        let reference: Vec<f64> = pts.iter().map(|p| closure.value_at(p)).collect();
        let ratio = est.max_deviation(&reference) / est.pooled_std_error();
        out.checks.push(Check::at_most(format!("{case}: L∞ / pooled standard error"), ratio, cfg.sigmas));
        let d = pts[0].len();
        let header = match d {
            1 => "x0,mc,stderr,closure",
            _ => "x0,x1,mc,stderr,closure",
        };
        let rows = (0..pts.len()).map(|i| {
            let mut r = pts[i].clone();
            r.extend([est.mean[i], est.std_error[i], reference[i]]);
            r
        });
        out.tables.push(Table { name: format!("mc_vs_closure_{case}.csv"), csv: csv(header, rows) });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------------

/// Distance between the OU closure and its white-noise limit as γ grows at fixed g.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuLimitConfig {
    pub gammas: Vec<f64>,
    pub g: f64,
    pub kappa: f64,
    pub t: f64,
    /// Cross-stream window [−half_width, half_width].
    pub half_width: f64,
    pub ny: usize,
    pub dt: f64,
    /// First Hermite order tried; raised automatically when under-resolved.
    pub hermite_order: usize,
    pub expected_slope: f64,
    pub slope_tolerance: f64,
}

impl Default for OuLimitConfig {
    fn default() -> Self {
        OuLimitConfig {
            gammas: vec![10.0, 100.0, 1000.0],
            g: 1.0,
            kappa: 1.0,
            t: 1.0,
            half_width: 12.0,
            ny: 149,
            dt: 4e-3,
            hermite_order: 12,
            expected_slope: -0.5,
            slope_tolerance: 0.1,
        }
    }
}

impl OuLimitConfig {
    pub fn validate(&self) -> Result<()> {
        for (n, v) in [("g", self.g), ("kappa", self.kappa), ("t", self.t), ("half_width", self.half_width), ("dt", self.dt)] {
            positive(n, v)?;
        }
        if self.gammas.len() < 2 {
            return Err(invalid("need at least two damping rates"));
        }
        for &gm in &self.gammas {
            positive("gamma", gm)?;
        }
        Ok(())
    }
}

pub fn run_ou_limit(cfg: &OuLimitConfig, _seed: u64) -> Result<Outcome> {
    cfg.validate()?;
    let field = field_by_name("linear_shear")?;
    let ic = InitialCondition::Separable {
        factors: vec![Profile::Cosine { wavenumber: 1.0 }, Profile::Gaussian { center: 0.0, width: 0.5 }],
    };
    let axes = vec![AxisSpec::periodic(2.0 * PI, 8), AxisSpec::truncated(-cfg.half_width, cfg.half_width, cfg.ny)];
    let st = TimeStepping::new(cfg.dt, TimeScheme::TrBdf2).with_richardson();
    let white = solve_shear_npoint(cfg.g, cfg.kappa, 1, &field, &ic, &GridSpec::new(axes.clone()), cfg.t, &st)?;
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for &gamma in &cfg.gammas {
        let gen = ClosureGenerator::ou(cfg.kappa, cfg.g, gamma, field.clone())?;
        let mut order = cfg.hermite_order;
        let sol = loop {
            match solve_ou_shear(&gen, &ic, &GridSpec::new(axes.clone()).with_hermite(order), cfg.t, &st) {
                Err(Error::HermiteTruncation { suggested, .. }) if suggested > order && order < 64 => order = suggested,
                other => break other?,
            }
        };
        let err = sol.mean.values.iter().zip(&white.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        errors.push(err);
        rows.push(vec![gamma, order as f64, sol.top_fraction, err]);
    }
    let fit = loglog_fit(&cfg.gammas, &errors);
    let mut out = Outcome::default();
    out.checks.push(Check::within("log-log slope of ‖Ψ_OU − Ψ_white‖∞ in γ", fit.slope, cfg.expected_slope, cfg.slope_tolerance));
    out.tables.push(Table { name: "ou_limit.csv".into(), csv: csv("gamma,hermite_order,top_fraction,error", rows) });
    let mut fit_csv = String::from("slope,intercept,r_squared\n");
    let _ = writeln!(fit_csv, "{:.16e},{:.16e},{:.16e}", fit.slope, fit.intercept, fit.r_squared);
    out.tables.push(Table { name: "ou_limit_fit.csv".into(), csv: fit_csv });
    Ok(out)
}

// ---------------------------------------------------------------------------------

/// Term-by-term Wick enumeration against the averaged expansion on random matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagatorConfig {
    pub families: usize,
    pub dim: usize,
    pub max_order: usize,
    pub t: f64,
    pub g: f64,
    /// Entry standard deviation of the random matrices.
    pub scale: f64,
    pub tolerance: f64,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        PropagatorConfig { families: 10, dim: 4, max_order: 5, t: 0.5, g: 1.0, scale: 0.5, tolerance: 1e-12 }
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| Complex64::new(scale * rng.sample::<f64, _>(rand_distr::StandardNormal), 0.0))
}

pub fn run_propagator_check(cfg: &PropagatorConfig, seed: u64) -> Result<Outcome> {
    if cfg.families == 0 || cfg.dim == 0 || cfg.max_order == 0 {
        return Err(invalid("need at least one family, dimension and order"));
    }
    positive("t", cfg.t)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let (mut worst_dev, mut worst_nonadj) = (0.0f64, 0.0f64);
    for f in 0..cfg.families {
        let piecewise = f % 2 == 1;
        let family = if piecewise {
            let b1 = cfg.t * rng.random_range(0.2..0.8);
            let b2 = cfg.t * rng.random_range(0.2..0.8);
            let c = MatrixFunction::piecewise_constant(
                vec![b1],
                vec![random_matrix(&mut rng, cfg.dim, cfg.scale), random_matrix(&mut rng, cfg.dim, cfg.scale)],
            )?;
            let v = MatrixFunction::piecewise_constant(
                vec![b2],
                vec![random_matrix(&mut rng, cfg.dim, cfg.scale), random_matrix(&mut rng, cfg.dim, cfg.scale)],
            )?;
            OperatorFamily::new(c, v, cfg.g)?
        } else {
            OperatorFamily::constant(random_matrix(&mut rng, cfg.dim, cfg.scale), random_matrix(&mut rng, cfg.dim, cfg.scale), cfg.g)?
        };
        let w = raw_wick_expansion(&family, cfg.t, cfg.max_order)?;
        worst_dev = worst_dev.max(w.max_deviation);
        worst_nonadj = worst_nonadj.max(w.max_nonadjacent);
        let averaged = averaged_by_raw_order(&family, cfg.t, cfg.max_order)?;
        let exact = averaged_propagator_exact(&family, cfg.t)?;
        let mut partial = CMatrix::zeros(cfg.dim, cfg.dim);
        for order in 0..=cfg.max_order {
            partial += &averaged[order];
            rows.push(vec![
                f as f64,
                piecewise as u8 as f64,
                order as f64,
                w.term_counts[order] as f64,
                w.surviving_counts[order] as f64,
                (&w.orders[order] - &averaged[order]).norm(),
                (&partial - &exact).norm(),
            ]);
        }
    }

    // Commuting constants: V a polynomial in C, so the averaged propagator is a plain
    // exponential and the truncation error is the first omitted Taylor term.
    let mut worst_ratio = 0.0f64;
    let mut trunc_rows = Vec::new();
    for f in 0..cfg.families.div_ceil(2) {
        let c = random_matrix(&mut rng, cfg.dim, cfg.scale);
        let (a, b) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let v = &c * Complex64::new(a, 0.0) + CMatrix::identity(cfg.dim, cfg.dim) * Complex64::new(b, 0.0);
        let family = OperatorFamily::constant(c, v, cfg.g)?;
        let exact = averaged_propagator_exact(&family, cfg.t)?;
        let full = averaged_series(&family, cfg.t, cfg.max_order + 1)?;
        for order in 1..=cfg.max_order {
            let err = (&averaged_series(&family, cfg.t, order)?.sum - &exact).norm();
            let next = full.terms[order + 1].norm();
            // The remainder is the next term times a factor close to one; allow 2.
            let ratio = err / (2.0 * next + 1e-15);
            worst_ratio = worst_ratio.max(ratio);
            trunc_rows.push(vec![f as f64, order as f64, err, next]);
        }
    }
    let mut out = Outcome::default();
    out.checks.push(Check::at_most("raw Wick sum vs averaged series, max ‖Δ‖_F", worst_dev, cfg.tolerance));
    out.checks.push(Check::at_most("largest entry of any non-adjacent pairing", worst_nonadj, 0.0));
    out.checks.push(Check::at_most("commuting truncation error / (2 × next term)", worst_ratio, 1.0));
    out.tables.push(Table {
        name: "propagator_wick.csv".into(),
        csv: csv("family,piecewise,order,terms,surviving,raw_vs_averaged,averaged_vs_exact", rows),
    });
    out.tables.push(Table {
        name: "propagator_truncation.csv".into(),
        csv: csv("family,order,error,next_term", trunc_rows),
    });
    Ok(out)
}

// ---------------------------------------------------------------------------------

/// Effective diffusivity: shear shortcut, cell problem, Monte Carlo dispersion and
/// the N-point block tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomogenizeConfig {
    pub shear_pes: Vec<f64>,
    pub shear_modes: usize,
    pub cellular_pe: f64,
    pub cellular_modes: usize,
    pub horizon: f64,
    pub dispersion: EnsembleConfig,
    pub relative_tolerance: f64,
    pub npoint: usize,
}

impl Default for HomogenizeConfig {
    fn default() -> Self {
        HomogenizeConfig {
            shear_pes: vec![0.5, 1.0, 2.0],
            shear_modes: 8,
            cellular_pe: 1.0,
            cellular_modes: 64,
            horizon: 0.5,
            dispersion: EnsembleConfig { realizations: 100, particles: 1000, dt: 5e-4, extrapolate: false },
            relative_tolerance: 0.05,
            npoint: 2,
        }
    }
}

pub fn run_homogenize(cfg: &HomogenizeConfig, seed: u64) -> Result<Outcome> {
    positive("horizon", cfg.horizon)?;
    positive("relative_tolerance", cfg.relative_tolerance)?;
    if cfg.npoint < 2 {
        return Err(invalid("the block tensor check needs npoint ≥ 2"));
    }
    let mut out = Outcome::default();
    let mut tensors = String::from("case,i,j,value,pe,provenance\n");
    let mut append = |label: &str, csv_body: &str| {
        for line in csv_body.lines().skip(1) {
            let _ = writeln!(tensors, "{label},{line}");
        }
    };
    let shear = field_by_name("sine_shear")?;
    for &pe in &cfg.shear_pes {
        let target = 1.0 + 0.5 * pe * pe;
        let short = shear_shortcut(&shear, pe)?;
        let cp = CellProblem::new(shear.clone(), pe, cfg.shear_modes, 0)?;
        let general = effective_tensor(&cp, &solve_cell_problem(&cp)?)?;
        out.checks.push(Check::within(format!("shear Pe={pe}: shortcut Λ_xx"), short.lambda[(0, 0)], target, 1e-12));
        out.checks.push(Check::within(format!("shear Pe={pe}: cell problem Λ_xx"), general.lambda[(0, 0)], target, 1e-12));
        out.checks.push(Check::at_most(
            format!("shear Pe={pe}: |shortcut − cell problem|"),
            (short.lambda[(0, 0)] - general.lambda[(0, 0)]).abs(),
            1e-12,
        ));
        append(&format!("shear_shortcut_pe{pe}"), &short.to_csv());
        append(&format!("shear_cell_pe{pe}"), &general.to_csv());
    }

    let cellular = field_by_name("cellular")?;
    let cp = CellProblem::new(cellular.clone(), cfg.cellular_pe, cfg.cellular_modes, 0)?;
    let sol = solve_cell_problem(&cp)?;
    let lambda = effective_tensor(&cp, &sol)?;
    append("cellular", &lambda.to_csv());
    let spec = cfg.dispersion.spec(seed);
    let mc = effective_dispersion_mc(&cellular, cfg.cellular_pe, cfg.horizon, &spec)?;
    let mut rel = 0.0f64;
    for i in 0..2 {
        rel = rel.max((mc.rate[i * 2 + i] / lambda.lambda[(i, i)] - 1.0).abs());
    }
    out.checks.push(Check::at_most("cellular: max relative |Λ_MC − Λ_cell| on the diagonal", rel, cfg.relative_tolerance));
    let mut disp = String::from("i,j,rate,stderr,rate_half,cell\n");
    for i in 0..2 {
        for j in 0..2 {
            let e = i * 2 + j;
            let _ = writeln!(disp, "{i},{j},{:.16e},{:.16e},{:.16e},{:.16e}", mc.rate[e], mc.std_error[e], mc.rate_half[e], lambda.lambda[(i, j)]);
        }
    }
    out.tables.push(Table { name: "dispersion.csv".into(), csv: disp });

    let block = npoint_tensor(&cp, &sol, cfg.npoint)?;
    append(&format!("cellular_npoint{}", cfg.npoint), &block.to_csv());
    let d = 2 * cfg.npoint;
    let mut worst = 0.0f64;
    // Cyclic shift and a transposition of the point labels generate all permutations.
    let shift = |i: usize| (i + 2) % d;
    let swap = |i: usize| if i < 4 { i ^ 2 } else { i };
    for perm in [&shift as &dyn Fn(usize) -> usize, &swap] {
        for i in 0..d {
            for j in 0..d {
                worst = worst.max((block.lambda[(perm(i), perm(j))] - block.lambda[(i, j)]).abs());
            }
        }
    }
    out.checks.push(Check::at_most("N-point tensor: max change under point relabelling", worst, 0.0));
    out.tables.insert(0, Table { name: "homogenize.csv".into(), csv: tensors });
    Ok(out)
}

// ---------------------------------------------------------------------------------

/// Exact GBM integral moments against their closed forms and long-time expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbmConfig {
    pub times: Vec<f64>,
    pub expansion_t: f64,
    pub tolerance: f64,
}

impl Default for GbmConfig {
    fn default() -> Self {
        GbmConfig { times: vec![0.5, 1.0, 2.0, 5.0], expansion_t: 2.0, tolerance: 1e-8 }
    }
}

pub fn run_gbm_moments(cfg: &GbmConfig, _seed: u64) -> Result<Outcome> {
    positive("expansion_t", cfg.expansion_t)?;
    let mut out = Outcome::default();
    let mut rows = Vec::new();
    for &t in &cfg.times {
        positive("time", t)?;
        let half = a_moment(-0.5, 0.0, t)?;
        let inv = inverse_moment_coth(t)?;
        let duf = dufresne_moment(-1.0, 0.0, t)?;
        out.checks.push(Check::within(format!("√t E[A_t^(-1/2)] at t={t}"), half.value * t.sqrt(), 1.0, cfg.tolerance));
        out.checks.push(Check::within(format!("E[(2A_t)^(-1)] vs ½E[A_t^(-1)] at t={t}"), duf.value, 0.5 * inv.value, cfg.tolerance));
        rows.push(vec![t, half.value, inv.value, duf.value, inverse_moment_asymptotic(t, 3)]);
    }
    let t = cfg.expansion_t;
    let inv = inverse_moment_coth(t)?;
    let three = inverse_moment_asymptotic(t, 3);
    let last = PI.powf(3.5) / (120.0 * std::f64::consts::SQRT_2 * t.powf(2.5));
    out.checks.push(Check::within(format!("E[A_t^(-1)] vs three-term expansion at t={t}"), inv.value, three, last));
    out.tables.push(Table {
        name: "gbm_moments.csv".into(),
        csv: csv("t,a_inv_half,a_inv,dufresne_2a_inv,a_inv_expansion3", rows),
    });
    Ok(out)
}

// ---------------------------------------------------------------------------------

/// Monte Carlo of the strain-flow scalar X_t: its mean and the growth of normalized
/// skewness and kurtosis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntermittencyConfig {
    pub mean_g: f64,
    pub mean_times: Vec<f64>,
    pub mean_tolerance: f64,
    pub fit_g: f64,
    pub fit_times: Vec<f64>,
    pub exponent_tolerance: f64,
    pub paths: usize,
    /// Step in the rescaled time g²t.
    pub dtau: f64,
}

impl Default for IntermittencyConfig {
    fn default() -> Self {
        IntermittencyConfig {
            mean_g: 1.0,
            mean_times: vec![1.0, 10.0],
            mean_tolerance: 0.01,
            fit_g: 4.0,
            fit_times: (0..9).map(|i| 10f64.powf(i as f64 / 4.0)).collect(),
            exponent_tolerance: 0.05,
            paths: 1_000_000,
            dtau: 0.2,
        }
    }
}

pub fn run_intermittency(cfg: &IntermittencyConfig, seed: u64) -> Result<Outcome> {
    positive("mean_g", cfg.mean_g)?;
    positive("fit_g", cfg.fit_g)?;
    positive("dtau", cfg.dtau)?;
    if cfg.fit_times.len() < 2 {
        return Err(invalid("need at least two fit times"));
    }
    let mut out = Outcome::default();
    let mc = McSettings { n_paths: cfg.paths, dtau: cfg.dtau, seed };
    let mean = x_statistics_mc(cfg.mean_g, &cfg.mean_times, 1, mc)?;
    let mut mean_rows = Vec::new();
    for s in &mean {
        let scaled = s.raw[0].value * (4.0 * PI * s.t).sqrt();
        out.checks.push(Check::within(format!("E[X_t](4πt)^(1/2) at t={}", s.t), scaled, 1.0, cfg.mean_tolerance));
        mean_rows.push(vec![s.t, s.raw[0].value, s.raw[0].error, scaled]);
    }
    let stats = x_statistics_mc(cfg.fit_g, &cfg.fit_times, 4, McSettings { seed: seed.wrapping_add(1), ..mc })?;
    let times: Vec<f64> = stats.iter().map(|s| s.t).collect();
    let mut rows = Vec::new();
    let mut series = [Vec::new(), Vec::new()];
    for s in &stats {
        let (skew, kurt) = (s.normalized_central(3), s.normalized_central(4));
        if !(skew > 0.0 && kurt > 0.0) {
            return Err(Error::Domain(format!("normalized moments not positive at t={}", s.t)));
        }
        series[0].push(skew);
        series[1].push(kurt);
        let raw: Vec<f64> = s.raw.iter().map(|m| m.value).collect();
        rows.push(vec![s.t, raw[0], raw[1], raw[2], raw[3], skew, kurt, normalized_central(&raw, 2)]);
    }
    let mut fit_rows = Vec::new();
    for (k, (n, label)) in [(3usize, "skewness"), (4, "kurtosis")].into_iter().enumerate() {
        let fit = loglog_fit(&times, &series[k]);
        let expected = (n as f64 - 2.0) / 4.0;
        out.checks.push(Check::within(format!("{label} growth exponent"), fit.slope, expected, cfg.exponent_tolerance));
        fit_rows.push(vec![n as f64, fit.slope, expected, fit.r_squared]);
    }
    out.tables.push(Table { name: "strain_mean.csv".into(), csv: csv("t,mean,stderr,scaled_mean", mean_rows) });
    out.tables.push(Table {
        name: "intermittency_moments.csv".into(),
        csv: csv("t,m1,m2,m3,m4,skewness,kurtosis,normalized_variance", rows),
    });
    out.tables.push(Table { name: "intermittency_fit.csv".into(), csv: csv("n,slope,expected,r_squared", fit_rows) });
    Ok(out)
}

// ---------------------------------------------------------------------------------

/// Deterministic invariants of the solvers, run without any Monte Carlo ensemble.
pub fn run_property_suite() -> Result<Outcome> {
    let start = Instant::now();
    let mut out = Outcome::default();
    let cellular = field_by_name("cellular")?;
    let torus = GridSpec::new(vec![AxisSpec::periodic(1.0, 16), AxisSpec::periodic(1.0, 16)]);
    let ic = InitialCondition::gaussian(vec![0.4, 0.6], 0.12);
    let gen = ClosureGenerator::white(0.1, 1.0, cellular.clone())?;
    let st = TimeStepping::new(1e-2, TimeScheme::CrankNicolson);

    // Mass and L² norm along a trajectory on the torus.
    let mut field = solve_white_closure(&gen, &ic, &torus, 0.02, &st)?;
    let m0 = field.integral();
    let (mut drift, mut growth) = (0.0f64, 0.0f64);
    let mut norm = field.l2_norm();
    for k in 1..10 {
        let t0 = 0.02 * k as f64;
        field = evolve_white_closure(&gen, &field, t0, t0 + 0.02, &st)?;
        drift = drift.max((field.integral() - m0).abs() / m0);
        let n = field.l2_norm();
        growth = growth.max(n - norm);
        norm = n;
    }
    out.checks.push(Check::at_most("mass drift on the torus (relative)", drift, 1e-12));
    out.checks.push(Check::at_most("largest step increase of the L² norm", growth, 1e-14));

    // Spectrum of the discrete generator.
    let grid = GridSpec::new(vec![AxisSpec::periodic(1.0, 8), AxisSpec::periodic(1.0, 8)]).build()?;
    let a = white_operator(&gen, &grid, 0.0)?.to_dense();
    let worst = a.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    out.checks.push(Check::at_most("largest real part of the generator spectrum / ‖A‖", worst / a.norm(), 1e-12));

    // Semigroup.
    let whole = solve_white_closure(&gen, &ic, &torus, 0.2, &st)?;
    let first = solve_white_closure(&gen, &ic, &torus, 0.1, &st)?;
    let second = evolve_white_closure(&gen, &first, 0.1, 0.2, &st)?;
    let semi = whole.values.iter().zip(&second.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    out.checks.push(Check::at_most("semigroup defect", semi, 1e-12));

    // Mean-zero normalization of the cell solution.
    let cp = CellProblem::new(cellular, 1.0, 16, 0)?;
    let sol = solve_cell_problem(&cp)?;
    let pin = (0..2).map(|i| sol.mean(i).norm()).fold(0.0, f64::max);
    out.checks.push(Check::at_most("cell solution mean", pin, 0.0));

    // Bitwise reproducibility of sampled paths.
    let pg = PathGrid::new(1e-3, 1000)?;
    let same_b = brownian_path_indexed(pg, 7, 3) == brownian_path_indexed(pg, 7, 3);
    let ou = OuParams::new(2.0, 1.0)?;
    let same_ou = ou_path_indexed(ou, pg, 7, 3) == ou_path_indexed(ou, pg, 7, 3);
    out.checks.push(Check::at_most("non-reproducible path samples", (!same_b as u8 + !same_ou as u8) as f64, 0.0));

    let elapsed = start.elapsed().as_secs_f64();
    out.checks.push(Check::at_most("property suite runtime (s)", elapsed, 60.0));
    Ok(out)
}
