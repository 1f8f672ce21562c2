//! Tensor-product grids, one-dimensional difference operators and sampled fields.

use crate::error::{invalid, Error, Result};
use crate::linalg::Csr;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Minimum number of nodes per axis.
pub const MIN_POINTS: usize = 8;
/// Minimum Hermite order for the OU closure.
pub const MIN_HERMITE: usize = 4;

/// One axis of a grid.
///
/// Periodic axes use Fourier spectral differentiation on `points` equispaced nodes.
/// Truncated axes carry `points` interior nodes with homogeneous Dirichlet values at
/// `lower` and `upper`, second-order differences, and an optional stretch
/// x = s·sinh(ξ) with ξ uniform, which concentrates nodes near the origin and extends
/// the window geometrically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "boundary", rename_all = "snake_case")]
pub enum AxisSpec {
    Periodic {
        #[serde(default)]
        start: f64,
        length: f64,
        points: usize,
    },
    Truncated {
        lower: f64,
        upper: f64,
        points: usize,
        #[serde(default)]
        stretch: Option<f64>,
    },
}

impl AxisSpec {
    pub fn periodic(length: f64, points: usize) -> Self {
        AxisSpec::Periodic { start: 0.0, length, points }
    }

    /// Periodic axis centred on the origin.
    pub fn periodic_centered(length: f64, points: usize) -> Self {
        AxisSpec::Periodic { start: -0.5 * length, length, points }
    }

    pub fn truncated(lower: f64, upper: f64, points: usize) -> Self {
        AxisSpec::Truncated { lower, upper, points, stretch: None }
    }

    pub fn stretched(lower: f64, upper: f64, points: usize, scale: f64) -> Self {
        AxisSpec::Truncated { lower, upper, points, stretch: Some(scale) }
    }

    pub fn points(&self) -> usize {
        match self {
            AxisSpec::Periodic { points, .. } | AxisSpec::Truncated { points, .. } => *points,
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, AxisSpec::Periodic { .. })
    }

    /// The same axis with its node count replaced.
    pub fn with_points(&self, n: usize) -> Self {
        let mut a = self.clone();
        match &mut a {
            AxisSpec::Periodic { points, .. } | AxisSpec::Truncated { points, .. } => *points = n,
        }
        a
    }

    /// Truncated axis refined so that every old node is kept: 2(n+1) − 1 interior nodes.
    pub fn refined(&self) -> Self {
        match self {
            AxisSpec::Periodic { points, .. } => self.with_points(2 * points),
            AxisSpec::Truncated { points, .. } => self.with_points(2 * points + 1),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.points() < MIN_POINTS {
            return Err(invalid(format!("each axis needs at least {MIN_POINTS} points, got {}", self.points())));
        }
        match self {
            AxisSpec::Periodic { start, length, .. } => {
                if !(*length > 0.0 && length.is_finite() && start.is_finite()) {
                    return Err(invalid("periodic axis needs a positive finite length"));
                }
            }
            AxisSpec::Truncated { lower, upper, stretch, .. } => {
                if !(lower < upper && lower.is_finite() && upper.is_finite()) {
                    return Err(invalid(format!("truncated axis needs lower < upper, got [{lower}, {upper}]")));
                }
                if let Some(s) = stretch {
                    if !(*s > 0.0 && s.is_finite()) {
                        return Err(invalid("stretch scale must be positive"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Grid specification: axes in coordinate order, plus the Hermite order for the OU
/// auxiliary variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<AxisSpec>,
    #[serde(default)]
    pub hermite_order: Option<usize>,
}

impl GridSpec {
    pub fn new(axes: Vec<AxisSpec>) -> Self {
        GridSpec { axes, hermite_order: None }
    }

    pub fn with_hermite(mut self, order: usize) -> Self {
        self.hermite_order = Some(order);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(invalid("grid needs at least one axis"));
        }
        for a in &self.axes {
            a.validate()?;
        }
        if let Some(m) = self.hermite_order {
            if m < MIN_HERMITE {
                return Err(invalid(format!("Hermite order must be at least {MIN_HERMITE}, got {m}")));
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Grid> {
        self.validate()?;
        Ok(Grid { axes: self.axes.iter().map(Axis::new).collect(), spec: self.clone() })
    }
}

/// A built axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub spec: AxisSpec,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Truncated axes: computational step, ξ of the lower end, and the stretch scale.
    h: f64,
    xi0: f64,
    scale: Option<f64>,
}

impl Axis {
    fn new(spec: &AxisSpec) -> Axis {
        match *spec {
            AxisSpec::Periodic { start, length, points } => {
                let h = length / points as f64;
                Axis {
                    spec: spec.clone(),
                    nodes: (0..points).map(|j| start + h * j as f64).collect(),
                    weights: vec![h; points],
                    h,
                    xi0: start,
                    scale: None,
                }
            }
            AxisSpec::Truncated { lower, upper, points, stretch } => {
                let (a, b) = match stretch {
                    Some(s) => ((lower / s).asinh(), (upper / s).asinh()),
                    None => (lower, upper),
                };
                let h = (b - a) / (points + 1) as f64;
                let mut ax = Axis { spec: spec.clone(), nodes: vec![], weights: vec![], h, xi0: a, scale: stretch };
                ax.nodes = (1..=points).map(|i| ax.map(a + h * i as f64)).collect();
                ax.weights = (1..=points).map(|i| h * ax.jac(a + h * i as f64)).collect();
                ax
            }
        }
    }

    fn map(&self, xi: f64) -> f64 {
        match self.scale {
            Some(s) => s * xi.sinh(),
            None => xi,
        }
    }

    fn inverse(&self, x: f64) -> f64 {
        match self.scale {
            Some(s) => (x / s).asinh(),
            None => x,
        }
    }

    /// dx/dξ.
    fn jac(&self, xi: f64) -> f64 {
        match self.scale {
            Some(s) => s * xi.cosh(),
            None => 1.0,
        }
    }

    /// ξ of interior node i (truncated axes); i = −1 and i = n are the boundaries.
    fn xi(&self, i: f64) -> f64 {
        self.xi0 + self.h * (i + 1.0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_periodic(&self) -> bool {
        self.spec.is_periodic()
    }

    /// Period of a periodic axis.
    pub fn period(&self) -> Option<f64> {
        match self.spec {
            AxisSpec::Periodic { length, .. } => Some(length),
            _ => None,
        }
    }

    /// Angular wavenumbers in FFT order for a periodic axis.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.len();
        let l = self.period().expect("periodic axis");
        (0..n)
            .map(|m| {
                let s = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
                2.0 * PI * s / l
            })
            .collect()
    }

    /// First-derivative matrix.
    pub fn d1(&self) -> Csr {
        let n = self.len();
        match self.spec {
            AxisSpec::Periodic { length, .. } => {
                let ks: Vec<f64> = (1..(n + 1) / 2).map(|m| 2.0 * PI * m as f64 / length).collect();
                dense_toeplitz(n, |d| {
                    let th = 2.0 * PI * d as f64 / n as f64;
                    ks.iter().enumerate().map(|(m, k)| -2.0 * k * ((m + 1) as f64 * th).sin()).sum::<f64>() / n as f64
                })
            }
            AxisSpec::Truncated { .. } => {
                let mut trip = Vec::with_capacity(2 * n);
                for i in 0..n {
                    let c = 1.0 / (2.0 * self.h * self.jac(self.xi(i as f64)));
                    if i > 0 {
                        trip.push((i, i - 1, -c));
                    }
                    if i + 1 < n {
                        trip.push((i, i + 1, c));
                    }
                }
                Csr::from_triplets(n, n, trip)
            }
        }
    }

    /// Second-derivative matrix (conservative form on stretched axes).
    pub fn d2(&self) -> Csr {
        self.conservative_second(|_| 1.0)
    }

    /// Discretization of c(x)∂_x(c(x)∂_x ·) in compact conservative form with c sampled
    /// at nodes and half nodes. Truncated axes only; periodic axes use `d1`-based products.
    pub fn conservative_second(&self, c: impl Fn(f64) -> f64) -> Csr {
        let n = self.len();
        match self.spec {
            AxisSpec::Periodic { length, .. } => {
                // Only the constant-coefficient case is needed on periodic axes.
                let ks: Vec<f64> = (1..=n / 2).map(|m| 2.0 * PI * m as f64 / length).collect();
                let nyq = n % 2 == 0;
                let c0 = c(0.0);
                dense_toeplitz(n, |d| {
                    let th = 2.0 * PI * d as f64 / n as f64;
                    let s: f64 = ks
                        .iter()
                        .enumerate()
                        .map(|(m, k)| {
                            let w = if nyq && m + 1 == n / 2 { 1.0 } else { 2.0 };
                            -w * k * k * ((m + 1) as f64 * th).cos()
                        })
                        .sum();
                    c0 * c0 * s / n as f64
                })
            }
            AxisSpec::Truncated { .. } => {
                let h2 = self.h * self.h;
                let mut trip = Vec::with_capacity(3 * n);
                for i in 0..n {
                    let xi = self.xi(i as f64);
                    let (xl, xr) = (self.xi(i as f64 - 0.5), self.xi(i as f64 + 0.5));
                    let cl = c(self.map(xl)) / self.jac(xl);
                    let cr = c(self.map(xr)) / self.jac(xr);
                    let ci = c(self.map(xi)) / (self.jac(xi) * h2);
                    if i > 0 {
                        trip.push((i, i - 1, ci * cl));
                    }
                    trip.push((i, i, -ci * (cl + cr)));
                    if i + 1 < n {
                        trip.push((i, i + 1, ci * cr));
                    }
                }
                Csr::from_triplets(n, n, trip)
            }
        }
    }

    /// Cubic Lagrange stencil at x: up to four (node index, weight) pairs. Boundary
    /// values of truncated axes are zero and are omitted.
    fn stencil(&self, x: f64) -> Vec<(usize, f64)> {
        let n = self.len();
        match self.spec {
            AxisSpec::Periodic { start, length, .. } => {
                let h = length / n as f64;
                let s = (x - start).rem_euclid(length) / h;
                let j = s.floor() as i64;
                let f = s - j as f64;
                lagrange4(f)
                    .iter()
                    .enumerate()
                    .map(|(o, w)| ((j - 1 + o as i64).rem_euclid(n as i64) as usize, *w))
                    .collect()
            }
            AxisSpec::Truncated { lower, upper, .. } => {
                if x <= lower || x >= upper {
                    return vec![];
                }
                // Position in units of h with the lower boundary at −1.
                let s = (self.inverse(x) - self.xi0) / self.h - 1.0;
                let j = (s.floor() as i64).clamp(-1, n as i64 - 2);
                let j0 = (j - 1).clamp(-1, n as i64 - 3).max(-1);
                let f = s - j0 as f64 - 1.0;
                lagrange4(f)
                    .iter()
                    .enumerate()
                    .filter_map(|(o, w)| {
                        let idx = j0 + o as i64;
                        (idx >= 0 && idx < n as i64).then_some((idx as usize, *w))
                    })
                    .collect()
            }
        }
    }
}

/// Weights of the cubic through nodes −1, 0, 1, 2 evaluated at f.
fn lagrange4(f: f64) -> [f64; 4] {
    [
        -f * (f - 1.0) * (f - 2.0) / 6.0,
        (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
        -(f + 1.0) * f * (f - 2.0) / 2.0,
        (f + 1.0) * f * (f - 1.0) / 6.0,
    ]
}

fn dense_toeplitz(n: usize, entry: impl Fn(usize) -> f64) -> Csr {
    let col: Vec<f64> = (0..n).map(&entry).collect();
    let mut trip = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            trip.push((i, j, col[(i + n - j) % n]));
        }
    }
    Csr::from_triplets(n, n, trip)
}

/// A built tensor grid. Unknowns are stored row-major, last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub axes: Vec<Axis>,
    pub spec: GridSpec,
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Axis::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Axis::len).collect()
    }

    /// Multi-index of flat index `idx`.
    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            let n = self.axes[a].len();
            out[a] = idx % n;
            idx /= n;
        }
        out
    }

    pub fn point_into(&self, idx: usize, out: &mut [f64]) {
        let mut idx = idx;
        for a in (0..self.dim()).rev() {
            let n = self.axes[a].len();
            out[a] = self.axes[a].nodes[idx % n];
            idx /= n;
        }
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.point_into(idx, &mut p);
        p
    }

    /// Sample a function at every node.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        (0..self.len())
            .map(|i| {
                self.point_into(i, &mut p);
                f(&p)
            })
            .collect()
    }

    /// Tensor-product quadrature weights.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = vec![1.0; self.len()];
        for (i, wi) in w.iter_mut().enumerate() {
            let mi = self.multi_index(i);
            for (a, &k) in mi.iter().enumerate() {
                *wi *= self.axes[a].weights[k];
            }
        }
        w
    }

    /// I ⊗ … ⊗ op ⊗ … ⊗ I with `op` acting on axis `a`.
    pub fn embed(&self, a: usize, op: &Csr) -> Csr {
        let before: usize = self.axes[..a].iter().map(Axis::len).product();
        let after: usize = self.axes[a + 1..].iter().map(Axis::len).product();
        Csr::identity(before).kron(op).kron(&Csr::identity(after))
    }

    /// Flat indices of nodes adjacent to a truncated boundary.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| {
                let mi = self.multi_index(i);
                mi.iter().enumerate().any(|(a, &k)| !self.axes[a].is_periodic() && (k == 0 || k + 1 == self.axes[a].len()))
            })
            .collect()
    }

    pub fn has_truncated_axis(&self) -> bool {
        self.axes.iter().any(|a| !a.is_periodic())
    }
}

/// Values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(format!("{} values for a grid of {} nodes", values.len(), grid.len())));
        }
        Ok(ScalarField { grid, values })
    }

    /// Tensor cubic interpolation; zero outside truncated windows.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.grid.dim(), "point dimension");
        let stencils: Vec<Vec<(usize, f64)>> = self.grid.axes.iter().zip(x).map(|(a, &xi)| a.stencil(xi)).collect();
        if stencils.iter().any(|s| s.is_empty()) {
            return 0.0;
        }
        let shape = self.grid.shape();
        let mut total = 0.0;
        let mut pos = vec![0usize; stencils.len()];
        loop {
            let mut idx = 0;
            let mut w = 1.0;
            for (a, s) in stencils.iter().enumerate() {
                let (k, wk) = s[pos[a]];
                idx = idx * shape[a] + k;
                w *= wk;
            }
            total += w * self.values[idx];
            let mut a = stencils.len();
            loop {
                if a == 0 {
                    return total;
                }
                a -= 1;
                pos[a] += 1;
                if pos[a] < stencils[a].len() {
                    break;
                }
                pos[a] = 0;
            }
        }
    }

    pub fn integral(&self) -> f64 {
        self.grid.weights().iter().zip(&self.values).map(|(w, v)| w * v).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.grid.weights().iter().zip(&self.values).map(|(w, v)| w * v * v).sum::<f64>().sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest magnitude on nodes adjacent to a truncated boundary.
    pub fn boundary_magnitude(&self) -> f64 {
        self.grid.boundary_nodes().into_iter().fold(0.0, |m, i| m.max(self.values[i].abs()))
    }

    /// Fail unless the solution has decayed at every truncated boundary.
    pub fn assert_boundary_decay(&self, rel: f64) -> Result<()> {
        if !self.grid.has_truncated_axis() {
            return Ok(());
        }
        let limit = rel * self.sup_norm().max(f64::MIN_POSITIVE);
        let value = self.boundary_magnitude();
        if value > limit {
            return Err(Error::BoundaryDecay { value, limit });
        }
        Ok(())
    }

    /// CSV with one column per coordinate followed by `value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for a in 0..self.grid.dim() {
            s.push_str(&format!("x{a},"));
        }
        s.push_str("value\n");
        let mut p = vec![0.0; self.grid.dim()];
        for (i, v) in self.values.iter().enumerate() {
            self.grid.point_into(i, &mut p);
            for c in &p {
                s.push_str(&format!("{c:.16e},"));
            }
            s.push_str(&format!("{v:.16e}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(axes: Vec<AxisSpec>) -> Grid {
        GridSpec::new(axes).build().unwrap()
    }

    #[test]
    fn spectral_derivatives_are_exact_for_resolved_modes() {
        for n in [16, 17] {
            let g = grid(vec![AxisSpec::periodic(2.0, n)]);
            let ax = &g.axes[0];
            let f: Vec<f64> = ax.nodes().iter().map(|&x| (3.0 * PI * x).sin()).collect();
            let d1 = ax.d1().mul_vec(&f);
            let d2 = ax.d2().mul_vec(&f);
            for (i, &x) in ax.nodes().iter().enumerate() {
                assert!((d1[i] - 3.0 * PI * (3.0 * PI * x).cos()).abs() < 1e-11);
                assert!((d2[i] + 9.0 * PI * PI * (3.0 * PI * x).sin()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn stretched_axis_is_second_order() {
        let err = |n: usize| {
            let g = grid(vec![AxisSpec::stretched(-7.0, 7.0, n, 1.0)]);
            let ax = &g.axes[0];
            let f: Vec<f64> = ax.nodes().iter().map(|&x| (-x * x).exp()).collect();
            let d2 = ax.d2().mul_vec(&f);
            ax.nodes()
                .iter()
                .zip(&d2)
                .map(|(&x, v)| (v - (4.0 * x * x - 2.0) * (-x * x).exp()).abs())
                .fold(0.0, f64::max)
        };
        let (a, b) = (err(63), err(127));
        assert!((a / b - 4.0).abs() < 0.3, "ratio {}", a / b);
    }

    #[test]
    fn weights_and_interpolation() {
        let g = grid(vec![AxisSpec::stretched(-8.0, 8.0, 199, 2.0), AxisSpec::periodic(1.0, 16)]);
        let f = g.sample(|p| (-p[0] * p[0] / 2.0).exp() * (1.0 + 0.5 * (2.0 * PI * p[1]).cos()));
        let s = ScalarField::new(g, f).unwrap();
        assert!((s.integral() - (2.0 * PI).sqrt()).abs() < 1e-3);
        let x = [0.37, 0.81];
        let exact = (-x[0] * x[0] / 2.0f64).exp() * (1.0 + 0.5 * (2.0 * PI * x[1]).cos());
        assert!((s.value_at(&x) - exact).abs() < 2e-3);
        assert_eq!(s.value_at(&[9.0, 0.5]), 0.0);
        assert!(s.assert_boundary_decay(1e-10).is_ok());
    }

    #[test]
    fn refined_truncated_axis_contains_old_nodes() {
        let a = AxisSpec::stretched(-5.0, 5.0, 9, 0.5);
        let g1 = grid(vec![a.clone()]);
        let g2 = grid(vec![a.refined()]);
        for (i, x) in g1.axes[0].nodes().iter().enumerate() {
            assert!((g2.axes[0].nodes()[2 * i + 1] - x).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_thin_axes() {
        assert!(GridSpec::new(vec![AxisSpec::periodic(1.0, 4)]).build().is_err());
        assert!(GridSpec::new(vec![AxisSpec::periodic(1.0, 8)]).with_hermite(2).build().is_err());
    }
}
