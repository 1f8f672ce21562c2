//! Ornstein–Uhlenbeck closure in the Hermite basis of the auxiliary variable.
//!
//! With orthonormal Hermite functions h_n of weight π^{-1/2}e^{−z²}, the coefficients
//! a_n(x, t) of ψ = Σ a_n h_n(z) obey
//!
//! ∂_t a_n = κΔa_n − γn a_n − g√γ D(√(n/2) a_{n−1} + √((n+1)/2) a_{n+1}),  D = v·∇,
//!
//! with a_0(0) = T_I, a_n(0) = 0 otherwise, and Ψ = a_0. The relaxation layer of width
//! 1/γ is integrated with small steps unless the caller sets its own layer.

use super::grid::{Grid, GridSpec, ScalarField, MIN_HERMITE};
use super::{advection_operator, check_dims, diffusion_operator, ClosureGenerator, NoiseMode, TimeStepping, BOUNDARY_TOLERANCE};
use crate::error::{invalid, Error, Result};
use crate::ic::InitialCondition;
use crate::linalg::Csr;

/// Largest allowed share of the solution norm carried by the two highest modes.
pub const HERMITE_TOLERANCE: f64 = 1e-6;

/// Hermite coefficients of ψ and the z-averaged mean Ψ = a_0.
#[derive(Debug, Clone)]
pub struct OuSolution {
    pub modes: Vec<ScalarField>,
    pub mean: ScalarField,
    /// Norm share of the two highest modes.
    pub top_fraction: f64,
}

impl OuSolution {
    pub fn order(&self) -> usize {
        self.modes.len()
    }

    /// ψ at grid node `node` and auxiliary value z.
    pub fn psi(&self, node: usize, z: f64) -> f64 {
        // Orthonormal recurrence: h_{n+1} = √(2/(n+1)) z h_n − √(n/(n+1)) h_{n−1}.
        let (mut hm, mut h) = (0.0, 1.0);
        let mut sum = 0.0;
        for (n, m) in self.modes.iter().enumerate() {
            sum += m.values[node] * h;
            let next = (2.0 / (n + 1) as f64).sqrt() * z * h - (n as f64 / (n + 1) as f64).sqrt() * hm;
            hm = h;
            h = next;
        }
        sum
    }
}

/// Tridiagonal mode coupling J: row n has √(n/2) at n−1 and `sign`·√((n+1)/2) at n+1.
pub(crate) fn hermite_coupling(order: usize, sign: f64) -> Csr {
    let mut trip = Vec::new();
    for n in 0..order {
        if n > 0 {
            trip.push((n, n - 1, (n as f64 / 2.0).sqrt()));
        }
        if n + 1 < order {
            trip.push((n, n + 1, sign * ((n + 1) as f64 / 2.0).sqrt()));
        }
    }
    Csr::from_triplets(order, order, trip)
}

/// Block operator with mode index fastest: base ⊗ I − γ I ⊗ diag(n) − g√γ K ⊗ J.
pub(crate) fn ou_system(base: &Csr, coupling: &Csr, g: f64, gamma: f64, order: usize, sign: f64) -> Csr {
    let m = order;
    let damp = Csr::diag(&(0..m).map(|n| -gamma * n as f64).collect::<Vec<_>>());
    let a = base.kron(&Csr::identity(m)).axpby(1.0, &Csr::identity(base.nrows).kron(&damp), 1.0);
    if g == 0.0 {
        return a;
    }
    a.axpby(1.0, &coupling.kron(&hermite_coupling(m, sign)), -g * gamma.sqrt())
}

/// Share of the weighted norm carried by the two highest modes, and a suggested order.
pub(crate) fn truncation_indicator(norms2: &[f64]) -> (f64, usize) {
    let m = norms2.len();
    let total: f64 = norms2.iter().sum();
    if total == 0.0 {
        return (0.0, m);
    }
    let top = norms2[m - 2] + norms2[m - 1];
    let fraction = (top / total).sqrt();
    let below = norms2[m - 4] + norms2[m - 3];
    let suggested = if below > 0.0 && top < below {
        // Geometric decay per pair of modes.
        let rho = (top / below).sqrt();
        let extra = ((HERMITE_TOLERANCE / fraction).ln() / rho.ln()).ceil().max(1.0) as usize;
        m + 2 * extra + 2
    } else {
        2 * m
    };
    (fraction, suggested)
}

/// Split interleaved mode data into per-mode vectors.
pub(crate) fn deinterleave(u: &[f64], order: usize) -> Vec<Vec<f64>> {
    (0..order).map(|n| u.iter().skip(n).step_by(order).copied().collect()).collect()
}

fn hermite_order(grid: &GridSpec) -> Result<usize> {
    let m = grid.hermite_order.ok_or_else(|| invalid("OU closure needs a Hermite order"))?;
    if m < MIN_HERMITE {
        return Err(invalid(format!("Hermite order must be at least {MIN_HERMITE}")));
    }
    Ok(m)
}

pub(crate) fn finish(grid: &Grid, modes: Vec<Vec<f64>>) -> Result<OuSolution> {
    let w = grid.weights();
    let norms2: Vec<f64> = modes.iter().map(|a| a.iter().zip(&w).map(|(x, wi)| wi * x * x).sum()).collect();
    let (fraction, suggested) = truncation_indicator(&norms2);
    if fraction > HERMITE_TOLERANCE {
        return Err(Error::HermiteTruncation { fraction, suggested });
    }
    let fields: Vec<ScalarField> =
        modes.into_iter().map(|v| ScalarField::new(grid.clone(), v)).collect::<Result<_>>()?;
    let sup = fields.iter().map(ScalarField::sup_norm).fold(0.0, f64::max);
    let edge = fields.iter().map(ScalarField::boundary_magnitude).fold(0.0, f64::max);
    if grid.has_truncated_axis() && edge > BOUNDARY_TOLERANCE * sup {
        return Err(Error::BoundaryDecay { value: edge, limit: BOUNDARY_TOLERANCE * sup });
    }
    Ok(OuSolution { mean: fields[0].clone(), modes: fields, top_fraction: fraction })
}

/// ψ and Ψ at time t for the OU closure on a real-space grid.
pub fn solve_ou_closure(
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
    let m = hermite_order(grid)?;
    let g = grid.build()?;
    check_dims(&g, &gen.field, Some(ic))?;
    let n = g.len();
    let diff = diffusion_operator(&g, gen.kappa);
    let mut u0 = vec![0.0; n * m];
    for (i, v) in g.sample(|x| ic.evaluate(x)).into_iter().enumerate() {
        u0[i * m] = v;
    }
    let build = |time: f64| ou_system(&diff, &advection_operator(&g, &gen.field, time), gen.g, gamma, m, 1.0);
    let stepping = stepping.resolving_rate(gamma);
    let u = if gen.field.is_steady() {
        stepping.integrate(&build(0.0), &u0, t)?
    } else {
        stepping.integrate_varying(|s| Ok(build(s)), &u0, 0.0, t)?
    };
    finish(&g, deinterleave(&u, m))
}
