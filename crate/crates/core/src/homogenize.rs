//! Periodic homogenization of ∂_tΨ = ΔΨ + Pe²(v·∇)²Ψ.
//!
//! The cell problem ∂_τθ − Δθ − Pe²(v·∇)²θ = Pe²(v·∇)v is solved by Fourier–Galerkin
//! on the space(-time) torus and the effective tensor is
//! Λ = I + Pe²⟨v vᵀ + v ((v·∇)θ)ᵀ⟩.

use crate::error::{invalid, Error, Result};
use crate::fields::VelocityField;
use crate::linalg::{bicgstab, pcg, KrylovInfo};
use nalgebra::DMatrix;
use num_complex::Complex64;
use crate::spectral::fft_along;
use rustfft::FftPlanner;
use std::f64::consts::PI;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const SOLVER_TOL: f64 = 1e-12;
const COEF_CUTOFF: f64 = 1e-15;

/// Cell-problem specification.
#[derive(Debug, Clone)]
pub struct CellProblem {
    pub field: VelocityField,
    pub pe: f64,
    /// Spatial Fourier modes kept per axis: |m| ≤ modes.
    pub modes: usize,
    /// Temporal modes |j| ≤ time_modes, used only for time-periodic fields.
    pub time_modes: usize,
}

impl CellProblem {
    pub fn new(field: VelocityField, pe: f64, modes: usize, time_modes: usize) -> Result<Self> {
        if field.dim() != 2 {
            return Err(invalid("the cell problem is implemented for planar fields"));
        }
        if field.spatial_period().is_none() {
            return Err(invalid(format!("field `{}` is not periodic", field.name())));
        }
        if !field.divergence_free() {
            return Err(invalid("homogenization requires a divergence-free field"));
        }
        if !(pe >= 0.0 && pe.is_finite()) {
            return Err(invalid(format!("Péclet number must be non-negative, got {pe}")));
        }
        if modes < 1 {
            return Err(invalid("need at least one Fourier mode"));
        }
        Ok(CellProblem { field, pe, modes, time_modes })
    }

    fn nt(&self) -> usize {
        if self.field.is_steady() {
            0
        } else {
            self.time_modes
        }
    }
}

/// Fourier index box |kx|, |ky| ≤ m, |kt| ≤ j, with kt fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ModeBox {
    m: i64,
    j: i64,
}

impl ModeBox {
    fn side(&self) -> usize {
        (2 * self.m + 1) as usize
    }
    fn tside(&self) -> usize {
        (2 * self.j + 1) as usize
    }
    fn len(&self) -> usize {
        self.side() * self.side() * self.tside()
    }
    fn index(&self, kx: i64, ky: i64, kt: i64) -> Option<usize> {
        if kx.abs() > self.m || ky.abs() > self.m || kt.abs() > self.j {
            return None;
        }
        let (s, ts) = (self.side() as i64, self.tside() as i64);
        Some((((kx + self.m) * s + (ky + self.m)) * ts + (kt + self.j)) as usize)
    }
    fn modes(&self) -> impl Iterator<Item = (i64, i64, i64)> + '_ {
        let (m, j) = (self.m, self.j);
        (-m..=m).flat_map(move |kx| (-m..=m).flat_map(move |ky| (-j..=j).map(move |kt| (kx, ky, kt))))
    }
}

/// Fourier coefficients of the two velocity components on the torus.
#[derive(Debug, Clone)]
struct Spectrum {
    /// (kx, ky, kt, v̂_x, v̂_y) for the retained coefficients.
    coefs: Vec<(i64, i64, i64, Complex64, Complex64)>,
    reach: i64,
    treach: i64,
}

fn spectrum(cp: &CellProblem) -> Spectrum {
    let periods = cp.field.spatial_period().expect("validated periodic");
    let tper = cp.field.temporal_period();
    let ns = (4 * (cp.modes + 1)).next_power_of_two().max(16);
    let nt = if tper.is_some() { (4 * (cp.nt() + 1)).next_power_of_two().max(8) } else { 1 };
    let dims = [ns, ns, nt];
    let total = ns * ns * nt;
    let mut vx = vec![ZERO; total];
    let mut vy = vec![ZERO; total];
    let mut v = [0.0; 2];
    for a in 0..ns {
        for b in 0..ns {
            for c in 0..nt {
                let x = [periods[0] * a as f64 / ns as f64, periods[1] * b as f64 / ns as f64];
                let t = tper.map(|p| p * c as f64 / nt as f64).unwrap_or(0.0);
                cp.field.evaluate_into(&x, t, &mut v);
                let i = (a * ns + b) * nt + c;
                vx[i] = Complex64::new(v[0], 0.0);
                vy[i] = Complex64::new(v[1], 0.0);
            }
        }
    }
    let mut planner = FftPlanner::new();
    for axis in 0..3 {
        fft_along(&mut vx, &dims, axis, false, &mut planner);
        fft_along(&mut vy, &dims, axis, false, &mut planner);
    }
    let norm = 1.0 / total as f64;
    let signed = |k: usize, n: usize| if k <= n / 2 { k as i64 } else { k as i64 - n as i64 };
    let mut coefs = Vec::new();
    let mut peak = 0.0f64;
    for i in 0..total {
        peak = peak.max(vx[i].norm()).max(vy[i].norm());
    }
    let (mut reach, mut treach) = (0, 0);
    for a in 0..ns {
        for b in 0..ns {
            for c in 0..nt {
                let i = (a * ns + b) * nt + c;
                let (cx, cy) = (vx[i] * norm, vy[i] * norm);
                if cx.norm().max(cy.norm()) > COEF_CUTOFF * peak * norm.max(1.0) {
                    let (kx, ky, kt) = (signed(a, ns), signed(b, ns), signed(c, nt));
                    // Nyquist modes are ambiguous; they only appear for unresolved fields.
                    if 2 * kx.unsigned_abs() as usize == ns || 2 * ky.unsigned_abs() as usize == ns {
                        continue;
                    }
                    reach = reach.max(kx.abs()).max(ky.abs());
                    treach = treach.max(kt.abs());
                    coefs.push((kx, ky, kt, cx, cy));
                }
            }
        }
    }
    // Keep the temporal band within what the unknown box can use.
    let jt = cp.nt() as i64;
    coefs.retain(|c| c.2.abs() <= 2 * jt.max(0) || tper.is_none());
    Spectrum { coefs, reach, treach: treach.min(2 * jt) }
}

/// Sparse operator D: box K → enlarged box K' applying v·∇ in Fourier space.
struct Advection {
    outer: ModeBox,
    /// Column-wise lists of (row in K', value).
    cols: Vec<Vec<(usize, Complex64)>>,
}

impl Advection {
    fn new(spec: &Spectrum, inner: ModeBox, periods: &[f64]) -> Advection {
        let outer = ModeBox { m: inner.m + spec.reach, j: inner.j + spec.treach };
        let (wx, wy) = (2.0 * PI / periods[0], 2.0 * PI / periods[1]);
        let cols = inner
            .modes()
            .map(|(qx, qy, qt)| {
                let mut col = Vec::with_capacity(spec.coefs.len());
                for &(px, py, pt, cx, cy) in &spec.coefs {
                    let row = outer.index(qx + px, qy + py, qt + pt);
                    let val = (cx * (wx * qx as f64) + cy * (wy * qy as f64)) * Complex64::new(0.0, 1.0);
                    if let (Some(r), true) = (row, val != ZERO) {
                        col.push((r, val));
                    }
                }
                col
            })
            .collect();
        Advection { outer, cols }
    }

    fn apply(&self, x: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|v| *v = ZERO);
        for (c, col) in self.cols.iter().enumerate() {
            if x[c] != ZERO {
                for &(r, v) in col {
                    out[r] += v * x[c];
                }
            }
        }
    }

    fn apply_adjoint(&self, y: &[Complex64], out: &mut [Complex64]) {
        for (c, col) in self.cols.iter().enumerate() {
            out[c] = col.iter().map(|&(r, v)| v.conj() * y[r]).sum();
        }
    }
}

/// Solution of the cell problem: Fourier coefficients of θ_x and θ_y on the mode box.
#[derive(Debug, Clone)]
pub struct CellSolution {
    theta: [Vec<Complex64>; 2],
    modes: usize,
    time_modes: usize,
    pub info: [KrylovInfo; 2],
    /// Relative residual ‖Lθ − f‖/‖f‖ per component.
    pub residual: [f64; 2],
}

impl CellSolution {
    /// Space–time mean of θ_i (identically zero by construction).
    pub fn mean(&self, i: usize) -> Complex64 {
        let b = ModeBox { m: self.modes as i64, j: self.time_modes as i64 };
        self.theta[i][b.index(0, 0, 0).expect("origin in box")]
    }

    /// Largest coefficient magnitude of θ_i.
    pub fn max_coefficient(&self, i: usize) -> f64 {
        self.theta[i].iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Evaluate θ_i at a point of the torus (θ is real up to rounding).
    pub fn evaluate(&self, cp: &CellProblem, i: usize, x: [f64; 2], t: f64) -> f64 {
        let b = ModeBox { m: self.modes as i64, j: self.time_modes as i64 };
        let p = cp.field.spatial_period().expect("periodic");
        let tp = cp.field.temporal_period().unwrap_or(1.0);
        b.modes()
            .zip(&self.theta[i])
            .map(|((kx, ky, kt), c)| {
                let ph = 2.0 * PI * (kx as f64 * x[0] / p[0] + ky as f64 * x[1] / p[1] + kt as f64 * t / tp);
                (c * Complex64::from_polar(1.0, ph)).re
            })
            .sum()
    }
}

struct Assembled {
    inner: ModeBox,
    adv: Advection,
    /// |k|² + iω for each inner mode.
    diag: Vec<Complex64>,
    origin: usize,
    v_hat: [Vec<Complex64>; 2],
}

impl Assembled {
    fn new(cp: &CellProblem) -> Assembled {
        let spec = spectrum(cp);
        let periods = cp.field.spatial_period().expect("periodic");
        let inner = ModeBox { m: cp.modes as i64, j: cp.nt() as i64 };
        let adv = Advection::new(&spec, inner, &periods);
        let tp = cp.field.temporal_period().unwrap_or(1.0);
        let (wx, wy) = (2.0 * PI / periods[0], 2.0 * PI / periods[1]);
        let diag = inner
            .modes()
            .map(|(kx, ky, kt)| {
                let k2 = (wx * kx as f64).powi(2) + (wy * ky as f64).powi(2);
                Complex64::new(k2, 2.0 * PI * kt as f64 / tp)
            })
            .collect();
        let outer = adv.outer;
        let mut v_hat = [vec![ZERO; outer.len()], vec![ZERO; outer.len()]];
        for &(kx, ky, kt, cx, cy) in &spec.coefs {
            if let Some(i) = outer.index(kx, ky, kt) {
                v_hat[0][i] = cx;
                v_hat[1][i] = cy;
            }
        }
        let origin = inner.index(0, 0, 0).expect("origin");
        Assembled { inner, adv, diag, origin, v_hat }
    }

    /// Restrict a coefficient vector on K' to K.
    fn restrict(&self, y: &[Complex64]) -> Vec<Complex64> {
        self.inner
            .modes()
            .map(|(a, b, c)| y[self.adv.outer.index(a, b, c).expect("inner ⊂ outer")])
            .collect()
    }

    fn apply_operator(&self, pe2: f64, x: &[Complex64], out: &mut [Complex64]) {
        let mut tmp = vec![ZERO; self.adv.outer.len()];
        self.adv.apply(x, &mut tmp);
        self.adv.apply_adjoint(&tmp, out);
        for i in 0..out.len() {
            out[i] = self.diag[i] * x[i] + out[i] * pe2;
        }
        out[self.origin] = x[self.origin];
    }
}

/// Solve Lθ_i = Pe²(v·∇)v_i for i = x, y with the mean mode pinned to zero.
pub fn solve_cell_problem(cp: &CellProblem) -> Result<CellSolution> {
    let asm = Assembled::new(cp);
    let pe2 = cp.pe * cp.pe;
    let n = asm.inner.len();
    let steady = cp.nt() == 0;
    let adv = &asm.adv;
    let mut precond: Vec<Complex64> = (0..n)
        .map(|c| asm.diag[c] + pe2 * adv.cols[c].iter().map(|(_, v)| v.norm_sqr()).sum::<f64>())
        .collect();
    precond[asm.origin] = Complex64::new(1.0, 0.0);
    let mut theta = [vec![ZERO; n], vec![ZERO; n]];
    let mut info = [KrylovInfo { iterations: 0, relative_residual: 0.0 }; 2];
    let mut residual = [0.0; 2];
    for comp in 0..2 {
        // f = Pe² (v·∇) v_i, restricted to K.
        let vi = asm.restrict(&asm.v_hat[comp]);
        let mut dv = vec![ZERO; adv.outer.len()];
        adv.apply(&vi, &mut dv);
        let mut rhs: Vec<Complex64> = asm.restrict(&dv).into_iter().map(|z| z * pe2).collect();
        let scale = rhs.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if rhs[asm.origin].norm() > 1e-10 * scale.max(1e-300) {
            return Err(Error::Domain(format!(
                "solvability condition fails: mean of (v·∇)v_{comp} = {:.3e}",
                rhs[asm.origin].norm()
            )));
        }
        rhs[asm.origin] = ZERO;
        let apply = |x: &[Complex64], y: &mut [Complex64]| asm.apply_operator(pe2, x, y);
        let (x, inf) = if steady {
            let p: Vec<f64> = precond.iter().map(|z| z.re).collect();
            pcg(apply, &p, &rhs, SOLVER_TOL, 20 * n + 100)?
        } else {
            bicgstab(apply, &precond, &rhs, SOLVER_TOL, 20 * n + 100)?
        };
        let mut ax = vec![ZERO; n];
        asm.apply_operator(pe2, &x, &mut ax);
        let rn: f64 = ax.iter().zip(&rhs).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let bn: f64 = rhs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        residual[comp] = if bn == 0.0 { 0.0 } else { rn / bn };
        if residual[comp] > 1e-10 {
            return Err(Error::Convergence(format!(
                "cell residual {:.2e}; try more than {} modes",
                residual[comp], cp.modes
            )));
        }
        theta[comp] = x;
        info[comp] = inf;
    }
    Ok(CellSolution { theta, modes: cp.modes, time_modes: cp.nt(), info, residual })
}

/// How a tensor was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    CellSolve,
    ShearShortcut,
    NpointAssembly,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::CellSolve => "cell-solve",
            Provenance::ShearShortcut => "shear-shortcut",
            Provenance::NpointAssembly => "npoint-assembly",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveTensor {
    pub lambda: DMatrix<f64>,
    pub pe: f64,
    pub provenance: Provenance,
}

impl EffectiveTensor {
    /// CSV with columns `i,j,value,pe,provenance`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("i,j,value,pe,provenance\n");
        for i in 0..self.lambda.nrows() {
            for j in 0..self.lambda.ncols() {
                s.push_str(&format!(
                    "{i},{j},{:.16e},{:.16e},{}\n",
                    self.lambda[(i, j)],
                    self.pe,
                    self.provenance.as_str()
                ));
            }
        }
        s
    }

    /// Symmetric part, the only part that enters ∇·(Λ∇Ψ).
    pub fn symmetric(&self) -> DMatrix<f64> {
        (&self.lambda + self.lambda.transpose()) * 0.5
    }
}

fn inner_product(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Λ = I + Pe²⟨v_i v_j + v_i (v·∇)θ_j⟩.
pub fn effective_tensor(cp: &CellProblem, sol: &CellSolution) -> Result<EffectiveTensor> {
    if sol.modes != cp.modes || sol.time_modes != cp.nt() {
        return Err(invalid("cell solution does not match the problem's mode counts"));
    }
    let asm = Assembled::new(cp);
    let pe2 = cp.pe * cp.pe;
    let mut lambda = DMatrix::identity(2, 2);
    for j in 0..2 {
        let mut dtheta = vec![ZERO; asm.adv.outer.len()];
        asm.adv.apply(&sol.theta[j], &mut dtheta);
        for i in 0..2 {
            let vv = inner_product(&asm.v_hat[i], &asm.v_hat[j]);
            let vt = inner_product(&asm.v_hat[i], &dtheta);
            lambda[(i, j)] += pe2 * (vv + vt);
        }
    }
    Ok(EffectiveTensor { lambda, pe: cp.pe, provenance: Provenance::CellSolve })
}

/// Λ = I + Pe²⟨v vᵀ⟩ for a shear (u(y, t), 0), with exact period averages.
pub fn shear_shortcut(field: &VelocityField, pe: f64) -> Result<EffectiveTensor> {
    let profile = field
        .shear_profile()
        .filter(|_| field.copies() == 1)
        .ok_or_else(|| invalid(format!("field `{}` is not a periodic shear", field.name())))?;
    if !(pe >= 0.0 && pe.is_finite()) {
        return Err(invalid("Péclet number must be non-negative"));
    }
    let mut lambda = DMatrix::identity(2, 2);
    lambda[(0, 0)] += pe * pe * profile.mean_square();
    Ok(EffectiveTensor { lambda, pe, provenance: Provenance::ShearShortcut })
}

/// The 2N × 2N tensor of the lifted N-point problem, assembled from the single-cell
/// solution. Diagonal blocks equal the single-point tensor; block (i, j), i ≠ j, is
/// Pe²⟨⟨v⟩_y ⟨v⟩_yᵀ⟩_τ (the product of cell means for steady fields), since the
/// lifted cell solution for coordinate pair j depends on y_j only and
/// ⟨(v·∇)θ⟩_y = 0.
pub fn npoint_tensor(cp: &CellProblem, sol: &CellSolution, n: usize) -> Result<EffectiveTensor> {
    if n < 1 {
        return Err(invalid("N must be at least 1"));
    }
    let single = effective_tensor(cp, sol)?;
    let asm = Assembled::new(cp);
    let pe2 = cp.pe * cp.pe;
    // ⟨v_a⟩_y(τ) is carried by the kx = ky = 0 coefficients.
    let outer = asm.adv.outer;
    let mut cross = DMatrix::zeros(2, 2);
    for a in 0..2 {
        for b in 0..2 {
            let mut s = 0.0;
            for kt in -outer.j..=outer.j {
                let i = outer.index(0, 0, kt).expect("in box");
                s += (asm.v_hat[a][i].conj() * asm.v_hat[b][i]).re;
            }
            cross[(a, b)] = pe2 * s;
        }
    }
    let d = 2 * n;
    let mut lambda = DMatrix::zeros(d, d);
    for bi in 0..n {
        for bj in 0..n {
            let blk = if bi == bj { &single.lambda } else { &cross };
            lambda.view_mut((2 * bi, 2 * bj), (2, 2)).copy_from(blk);
        }
    }
    Ok(EffectiveTensor { lambda, pe: cp.pe, provenance: Provenance::NpointAssembly })
}
