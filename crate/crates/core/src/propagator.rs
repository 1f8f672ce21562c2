//! Matrix check of the cluster expansion for E[U(t)] when dU/dt = (C(t) + ξ(t)V(t))U
//! and ξ is white noise of amplitude g.
//!
//! A raw term of order n is a word of n factors from {C, V}; its noise average is the
//! sum over perfect matchings of the V positions. On the time-ordered simplex a
//! white-noise pair survives only if its two factors are neighbours, in which case
//! the pair collapses to (g²/2)V(s)² at a single time. Surviving terms are therefore
//! words over {C, W = (g²/2)V²}, which are exactly the terms of the time-ordered
//! expansion of the averaged generator C + (g²/2)V².

use crate::error::{invalid, Result};
use crate::noise::{normal, path_rng};
use crate::quadrature::gauss_legendre;
use crate::stats::Accumulator;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

pub type CMatrix = DMatrix<Complex64>;

/// Piecewise-polynomial matrix function of time.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFunction {
    /// Interior breakpoints, strictly increasing.
    breaks: Vec<f64>,
    /// One polynomial per piece: `M(s) = Σ_k coeffs[k] s^k` in absolute time.
    pieces: Vec<Vec<CMatrix>>,
}

impl MatrixFunction {
    pub fn constant(m: CMatrix) -> Self {
        MatrixFunction { breaks: vec![], pieces: vec![vec![m]] }
    }

    /// Takes `mats[i]` on the i-th interval delimited by `breaks`.
    pub fn piecewise_constant(breaks: Vec<f64>, mats: Vec<CMatrix>) -> Result<Self> {
        MatrixFunction::piecewise_polynomial(breaks, mats.into_iter().map(|m| vec![m]).collect())
    }

    pub fn polynomial(coeffs: Vec<CMatrix>) -> Result<Self> {
        MatrixFunction::piecewise_polynomial(vec![], vec![coeffs])
    }

    pub fn piecewise_polynomial(breaks: Vec<f64>, pieces: Vec<Vec<CMatrix>>) -> Result<Self> {
        if pieces.len() != breaks.len() + 1 {
            return Err(invalid("need exactly one piece more than breakpoints"));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) || breaks.iter().any(|b| !b.is_finite()) {
            return Err(invalid("breakpoints must be finite and strictly increasing"));
        }
        let dim = pieces.first().and_then(|p| p.first()).map(|m| m.nrows()).unwrap_or(0);
        for p in &pieces {
            if p.is_empty() {
                return Err(invalid("empty polynomial piece"));
            }
            for m in p {
                if m.nrows() != dim || m.ncols() != dim {
                    return Err(invalid("all matrices must be square and of equal size"));
                }
                if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                    return Err(invalid("matrix entries must be finite"));
                }
            }
        }
        Ok(MatrixFunction { breaks, pieces })
    }

    pub fn dim(&self) -> usize {
        self.pieces[0][0].nrows()
    }

    fn piece_index(&self, s: f64) -> usize {
        self.breaks.partition_point(|&b| b <= s)
    }

    pub fn eval(&self, s: f64) -> CMatrix {
        self.eval_piece(self.piece_index(s), s)
    }

    fn eval_piece(&self, i: usize, s: f64) -> CMatrix {
        let p = &self.pieces[i];
        let mut acc = p[p.len() - 1].clone();
        for c in p.iter().rev().skip(1) {
            acc = acc * Complex64::new(s, 0.0) + c;
        }
        acc
    }

    pub fn degree(&self) -> usize {
        self.pieces.iter().map(|p| p.len() - 1).max().unwrap_or(0)
    }

    pub fn is_constant(&self) -> bool {
        self.pieces.len() == 1 && self.pieces[0].len() == 1
    }
}

/// A(s) = C(s) + ξ(s)V(s) with white noise of amplitude g.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorFamily {
    pub c: MatrixFunction,
    pub v: MatrixFunction,
    pub g: f64,
}

impl OperatorFamily {
    pub fn new(c: MatrixFunction, v: MatrixFunction, g: f64) -> Result<Self> {
        if c.dim() != v.dim() || c.dim() == 0 {
            return Err(invalid("C and V must have the same positive dimension"));
        }
        if !g.is_finite() {
            return Err(invalid("amplitude must be finite"));
        }
        Ok(OperatorFamily { c, v, g })
    }

    pub fn constant(c: CMatrix, v: CMatrix, g: f64) -> Result<Self> {
        OperatorFamily::new(MatrixFunction::constant(c), MatrixFunction::constant(v), g)
    }

    pub fn dim(&self) -> usize {
        self.c.dim()
    }

    /// The averaged generator C(s) + (g²/2)V(s)².
    pub fn averaged_generator(&self, s: f64) -> CMatrix {
        let v = self.v.eval(s);
        self.c.eval(s) + &v * &v * Complex64::new(0.5 * self.g * self.g, 0.0)
    }

    fn breakpoints_in(&self, t: f64) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .c
            .breaks
            .iter()
            .chain(&self.v.breaks)
            .copied()
            .filter(|&b| b > 0.0 && b < t)
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let mut out = vec![0.0];
        out.extend(pts);
        out.push(t);
        out
    }
}

/// A factor of a reduced (contracted) word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Factor {
    C,
    /// V(s)² from a contracted adjacent pair; the g²/2 weight is applied per term.
    W,
}

/// A raw term: the positions (1-based, time-ordered s_1 ≤ … ≤ s_n) that carry V and a
/// perfect matching of them. All other positions carry C.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairingTerm {
    pub order: usize,
    /// Pairs `(i, j)` with `i > j`.
    pub pairs: Vec<(usize, usize)>,
}

impl PairingTerm {
    pub fn new(order: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut used = vec![false; order + 1];
        for &(i, j) in &pairs {
            if !(i > j && j >= 1 && i <= order) {
                return Err(invalid(format!("pair ({i}, {j}) invalid for order {order}")));
            }
            if used[i] || used[j] {
                return Err(invalid("pairs must be disjoint"));
            }
            used[i] = true;
            used[j] = true;
        }
        Ok(PairingTerm { order, pairs })
    }

    pub fn v_positions(&self) -> Vec<usize> {
        let mut p: Vec<usize> = self.pairs.iter().flat_map(|&(i, j)| [i, j]).collect();
        p.sort_unstable();
        p
    }

    pub fn c_positions(&self) -> Vec<usize> {
        let v = self.v_positions();
        (1..=self.order).filter(|k| !v.contains(k)).collect()
    }

    pub fn is_adjacent(&self) -> bool {
        self.pairs.iter().all(|&(i, j)| i == j + 1)
    }
}

/// Order in which pairs are contracted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContractionOrder {
    HighestFirst,
    LowestFirst,
}

/// Apply the delta-contraction rule symbolically. `None` means the term vanishes
/// (some pair is not adjacent); otherwise the reduced word in time order
/// (index 0 ↔ earliest time) and the number of contracted pairs.
pub fn contract(term: &PairingTerm, order: ContractionOrder) -> Option<(Vec<Factor>, usize)> {
    // Slots hold (factor, original position); contraction merges neighbours.
    let mut slots: Vec<(Option<Factor>, usize)> = (1..=term.order).map(|k| (None, k)).collect();
    for k in term.c_positions() {
        slots[k - 1].0 = Some(Factor::C);
    }
    let mut pairs = term.pairs.clone();
    pairs.sort_unstable();
    if order == ContractionOrder::HighestFirst {
        pairs.reverse();
    }
    for (i, j) in pairs {
        if i != j + 1 {
            return None;
        }
        let pos = slots.iter().position(|s| s.1 == j)?;
        if slots.get(pos + 1).map(|s| s.1) != Some(i) {
            return None;
        }
        slots[pos].0 = Some(Factor::W);
        slots.remove(pos + 1);
    }
    let word: Vec<Factor> = slots.iter().map(|s| s.0.expect("every slot assigned")).collect();
    Some((word, term.pairs.len()))
}

/// Integrates time-ordered products ∫_{Ω_m(t)} F_m(s_m)…F_1(s_1) ds with a
/// Gauss–Legendre collocation of the nested integrals on each smooth segment.
struct SimplexIntegrator<'a> {
    family: &'a OperatorFamily,
    segments: Vec<(f64, f64)>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `cumulative[i][j] = ∫_{-1}^{x_i} ℓ_j` for the Lagrange basis on the nodes.
    cumulative: Vec<Vec<f64>>,
    /// Factor values at the nodes of each segment: (C, V²).
    values: Vec<Vec<(CMatrix, CMatrix)>>,
}

impl<'a> SimplexIntegrator<'a> {
    fn new(family: &'a OperatorFamily, t: f64, points: usize) -> Self {
        let (nodes, weights) = gauss_legendre(points);
        let cumulative = cumulative_matrix(&nodes);
        let bp = family.breakpoints_in(t);
        let segments: Vec<(f64, f64)> = bp.windows(2).map(|w| (w[0], w[1])).collect();
        let values = segments
            .iter()
            .map(|&(a, b)| {
                let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
                // Evaluate each piece at its interior so breakpoints do not matter.
                let ic = family.c.piece_index(mid);
                let iv = family.v.piece_index(mid);
                nodes
                    .iter()
                    .map(|x| {
                        let s = mid + half * x;
                        let v = family.v.eval_piece(iv, s);
                        (family.c.eval_piece(ic, s), &v * &v)
                    })
                    .collect()
            })
            .collect();
        SimplexIntegrator { family, segments, nodes, weights, cumulative, values }
    }

    fn integrate(&self, word: &[Factor]) -> CMatrix {
        let n = self.family.dim();
        let p = self.nodes.len();
        // start[k] = M_k at the left end of the current segment.
        let mut start: Vec<CMatrix> = vec![CMatrix::zeros(n, n); word.len() + 1];
        start[0] = CMatrix::identity(n, n);
        for (seg, &(a, b)) in self.segments.iter().enumerate() {
            let half = Complex64::new(0.5 * (b - a), 0.0);
            let vals = &self.values[seg];
            // prev[i] = M_{k-1} at node i.
            let mut prev: Vec<CMatrix> = vec![start[0].clone(); p];
            for (k, f) in word.iter().enumerate() {
                let integrand: Vec<CMatrix> = (0..p)
                    .map(|j| {
                        let fm = match f {
                            Factor::C => &vals[j].0,
                            Factor::W => &vals[j].1,
                        };
                        fm * &prev[j]
                    })
                    .collect();
                let mut cur = Vec::with_capacity(p);
                for i in 0..p {
                    let mut m = start[k + 1].clone();
                    for (j, g) in integrand.iter().enumerate() {
                        m += g * (half * self.cumulative[i][j]);
                    }
                    cur.push(m);
                }
                let mut end = start[k + 1].clone();
                for (j, g) in integrand.iter().enumerate() {
                    end += g * (half * self.weights[j]);
                }
                start[k + 1] = end;
                prev = cur;
            }
        }
        start.pop().expect("word length + 1 entries")
    }
}

fn cumulative_matrix(nodes: &[f64]) -> Vec<Vec<f64>> {
    let p = nodes.len();
    let (qx, qw) = gauss_legendre(p);
    let lagrange = |j: usize, x: f64| -> f64 {
        (0..p).filter(|&m| m != j).map(|m| (x - nodes[m]) / (nodes[j] - nodes[m])).product()
    };
    (0..p)
        .map(|i| {
            let (a, b) = (-1.0, nodes[i]);
            let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
            (0..p)
                .map(|j| qx.iter().zip(&qw).map(|(x, w)| w * h * lagrange(j, c + h * x)).sum())
                .collect()
        })
        .collect()
}

/// Collocation points per segment; exact for integrands of degree < 2·this.
fn collocation_points(family: &OperatorFamily, max_len: usize) -> usize {
    let deg = family.c.degree().max(2 * family.v.degree());
    ((max_len * (deg + 1) + 2) / 2 + 1).clamp(4, 40)
}

fn scale(m: CMatrix, s: f64) -> CMatrix {
    m * Complex64::new(s, 0.0)
}

/// Integrate one raw term over the simplex Ω_n(t) with the contraction rule.
/// Non-adjacent pairings return the exact zero matrix.
pub fn simplex_integrate_term(
    family: &OperatorFamily,
    term: &PairingTerm,
    t: f64,
    quadrature_points: Option<usize>,
) -> Result<CMatrix> {
    simplex_integrate_term_ordered(family, term, t, quadrature_points, ContractionOrder::HighestFirst)
}

pub fn simplex_integrate_term_ordered(
    family: &OperatorFamily,
    term: &PairingTerm,
    t: f64,
    quadrature_points: Option<usize>,
    order: ContractionOrder,
) -> Result<CMatrix> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid("time must be non-negative"));
    }
    let n = family.dim();
    let Some((word, pairs)) = contract(term, order) else {
        return Ok(CMatrix::zeros(n, n));
    };
    let pts = quadrature_points.unwrap_or_else(|| collocation_points(family, word.len()));
    let integ = SimplexIntegrator::new(family, t, pts);
    let weight = (0.5 * family.g * family.g).powi(pairs as i32);
    Ok(scale(integ.integrate(&word), weight))
}

fn words(len: usize) -> Vec<Vec<Factor>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|w| {
                [Factor::C, Factor::W].into_iter().map(move |f| {
                    let mut x = w.clone();
                    x.push(f);
                    x
                })
            })
            .collect();
    }
    out
}

pub const MAX_ORDER: usize = 6;

/// Truncated averaged expansion with its per-order terms (order = number of factors
/// = power of t).
#[derive(Debug, Clone)]
pub struct Series {
    pub terms: Vec<CMatrix>,
    pub sum: CMatrix,
    /// Frobenius norm of the last included order.
    pub truncation_estimate: f64,
}

/// Σ_{m ≤ max_order} Σ_{words of length m over {C, W}} ∫_{Ω_m} F_m…F_1, with W
/// weighted by g²/2.
pub fn averaged_series(family: &OperatorFamily, t: f64, max_order: usize) -> Result<Series> {
    if max_order > MAX_ORDER {
        return Err(invalid(format!("max_order is capped at {MAX_ORDER}")));
    }
    let n = family.dim();
    let integ = SimplexIntegrator::new(family, t, collocation_points(family, max_order));
    let w = 0.5 * family.g * family.g;
    let mut terms = Vec::with_capacity(max_order + 1);
    for m in 0..=max_order {
        let mut acc = CMatrix::zeros(n, n);
        for word in words(m) {
            let nw = word.iter().filter(|f| **f == Factor::W).count();
            acc += scale(integ.integrate(&word), w.powi(nw as i32));
        }
        terms.push(acc);
    }
    let sum = terms.iter().fold(CMatrix::zeros(n, n), |a, b| a + b);
    let truncation_estimate = terms.last().map(|m| m.norm()).unwrap_or(0.0);
    Ok(Series { terms, sum, truncation_estimate })
}

/// Averaged-generator terms regrouped by raw order n = (#factors) + (#W).
pub fn averaged_by_raw_order(family: &OperatorFamily, t: f64, max_order: usize) -> Result<Vec<CMatrix>> {
    if max_order > MAX_ORDER {
        return Err(invalid(format!("max_order is capped at {MAX_ORDER}")));
    }
    let n = family.dim();
    let integ = SimplexIntegrator::new(family, t, collocation_points(family, max_order));
    let w = 0.5 * family.g * family.g;
    let mut out = vec![CMatrix::zeros(n, n); max_order + 1];
    for m in 0..=max_order {
        for word in words(m) {
            let nw = word.iter().filter(|f| **f == Factor::W).count();
            if m + nw <= max_order {
                out[m + nw] += scale(integ.integrate(&word), w.powi(nw as i32));
            }
        }
    }
    Ok(out)
}

/// All perfect-matching terms of raw order n (even V counts only; odd counts have
/// zero mean and are not listed).
pub fn pairing_catalog(order: usize) -> Vec<PairingTerm> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << order) {
        if mask.count_ones() % 2 == 1 {
            continue;
        }
        let pos: Vec<usize> = (0..order).filter(|k| mask >> k & 1 == 1).map(|k| k + 1).collect();
        for pairs in matchings(&pos) {
            out.push(PairingTerm { order, pairs });
        }
    }
    out
}

fn matchings(pos: &[usize]) -> Vec<Vec<(usize, usize)>> {
    if pos.is_empty() {
        return vec![vec![]];
    }
    let first = pos[0];
    let mut out = Vec::new();
    for k in 1..pos.len() {
        let rest: Vec<usize> =
            pos.iter().enumerate().filter(|(i, _)| *i != 0 && *i != k).map(|(_, &p)| p).collect();
        for mut m in matchings(&rest) {
            m.insert(0, (pos[k], first));
            out.push(m);
        }
    }
    out
}

/// Outcome of the full enumeration.
#[derive(Debug, Clone)]
pub struct WickExpansion {
    /// Sum of all raw terms by raw order.
    pub orders: Vec<CMatrix>,
    pub term_counts: Vec<usize>,
    pub surviving_counts: Vec<usize>,
    /// Largest entry magnitude among non-adjacent terms (exactly 0 if the rule holds).
    pub max_nonadjacent: f64,
    /// max over orders of ‖raw − averaged‖_F.
    pub max_deviation: f64,
}

/// Enumerate every pairing up to `max_order`, integrate each with the contraction rule
/// and compare order by order with [`averaged_by_raw_order`].
pub fn raw_wick_expansion(family: &OperatorFamily, t: f64, max_order: usize) -> Result<WickExpansion> {
    if max_order > MAX_ORDER {
        return Err(invalid(format!("max_order is capped at {MAX_ORDER}")));
    }
    let n = family.dim();
    let pts = collocation_points(family, max_order);
    let reference = averaged_by_raw_order(family, t, max_order)?;
    let mut orders = Vec::new();
    let mut term_counts = Vec::new();
    let mut surviving_counts = Vec::new();
    let mut max_nonadjacent = 0.0f64;
    let mut max_deviation = 0.0f64;
    for order in 0..=max_order {
        let catalog = pairing_catalog(order);
        let mats: Vec<(bool, CMatrix)> = catalog
            .par_iter()
            .map(|term| {
                simplex_integrate_term(family, term, t, Some(pts)).map(|m| (term.is_adjacent(), m))
            })
            .collect::<Result<_>>()?;
        let mut acc = CMatrix::zeros(n, n);
        let mut alive = 0;
        for (adj, m) in &mats {
            if *adj {
                alive += 1;
            } else {
                max_nonadjacent = m.iter().map(|z| z.norm()).fold(max_nonadjacent, f64::max);
            }
            acc += m;
        }
        max_deviation = max_deviation.max((&acc - &reference[order]).norm());
        orders.push(acc);
        term_counts.push(catalog.len());
        surviving_counts.push(alive);
    }
    Ok(WickExpansion { orders, term_counts, surviving_counts, max_nonadjacent, max_deviation })
}

/// exp(t(C + (g²/2)V²)) for a constant family, or the product of segment exponentials
/// for a piecewise-constant one.
pub fn averaged_propagator_exact(family: &OperatorFamily, t: f64) -> Result<CMatrix> {
    if family.c.degree() > 0 || family.v.degree() > 0 {
        return Err(invalid("closed form needs piecewise-constant C and V"));
    }
    let n = family.dim();
    let mut u = CMatrix::identity(n, n);
    for w in family.breakpoints_in(t).windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let a = family.averaged_generator(mid) * Complex64::new(w[1] - w[0], 0.0);
        u = a.exp() * u;
    }
    Ok(u)
}

/// Classical RK4 for M' = (C(s) + (g²/2)V(s)²)M with `steps_per_segment` steps on each
/// smooth segment.
pub fn averaged_propagator_ode(family: &OperatorFamily, t: f64, steps_per_segment: usize) -> CMatrix {
    let n = family.dim();
    let mut u = CMatrix::identity(n, n);
    for w in family.breakpoints_in(t).windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        let ic = family.c.piece_index(mid);
        let iv = family.v.piece_index(mid);
        let gen = |s: f64| {
            let v = family.v.eval_piece(iv, s);
            family.c.eval_piece(ic, s) + &v * &v * Complex64::new(0.5 * family.g * family.g, 0.0)
        };
        let h = (b - a) / steps_per_segment as f64;
        let hc = Complex64::new(h, 0.0);
        for k in 0..steps_per_segment {
            let s = a + h * k as f64;
            let k1 = gen(s) * &u;
            let k2 = gen(s + 0.5 * h) * (&u + &k1 * (hc * 0.5));
            let k3 = gen(s + 0.5 * h) * (&u + &k2 * (hc * 0.5));
            let k4 = gen(s + h) * (&u + &k3 * hc);
            u += (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4)
                * (hc / 6.0);
        }
    }
    u
}

/// Monte Carlo mean of U(t) with entrywise standard errors.
#[derive(Debug, Clone)]
pub struct MatrixEstimate {
    pub mean: CMatrix,
    /// Standard errors of real and imaginary parts, packed as a complex matrix.
    pub std_error: CMatrix,
}

/// Averages solutions of the Stratonovich equation dU = C U dt + g V U ∘ dB, integrated
/// in its Itô form dU = (C + (g²/2)V²)U dt + g V U dB by Euler–Maruyama.
pub fn mc_matrix_propagator(
    family: &OperatorFamily,
    t: f64,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<MatrixEstimate> {
    if n_paths < 2 || !(dt > 0.0) || !(t > 0.0) {
        return Err(invalid("need n_paths ≥ 2, dt > 0 and t > 0"));
    }
    let n = family.dim();
    let steps = (t / dt).round().max(1.0) as usize;
    let h = t / steps as f64;
    let drift: Vec<CMatrix> = (0..steps).map(|k| family.averaged_generator(h * k as f64)).collect();
    let vol: Vec<CMatrix> = (0..steps)
        .map(|k| family.v.eval(h * k as f64) * Complex64::new(family.g, 0.0))
        .collect();
    const BLOCK: usize = 256;
    let blocks: Vec<Vec<Accumulator>> = (0..n_paths.div_ceil(BLOCK))
        .into_par_iter()
        .map(|blk| {
            let mut acc = vec![Accumulator::new(); 2 * n * n];
            for i in blk * BLOCK..((blk + 1) * BLOCK).min(n_paths) {
                let mut rng = path_rng(seed, i as u64);
                let mut u = CMatrix::identity(n, n);
                for k in 0..steps {
                    let db = h.sqrt() * normal(&mut rng);
                    let du = &drift[k] * &u * Complex64::new(h, 0.0)
                        + &vol[k] * &u * Complex64::new(db, 0.0);
                    u += du;
                }
                for (e, z) in u.iter().enumerate() {
                    acc[2 * e].push(z.re);
                    acc[2 * e + 1].push(z.im);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![Accumulator::new(); 2 * n * n];
    for b in &blocks {
        for (t, a) in total.iter_mut().zip(b) {
            t.merge(a);
        }
    }
    let mean = CMatrix::from_iterator(
        n,
        n,
        (0..n * n).map(|e| Complex64::new(total[2 * e].mean(), total[2 * e + 1].mean())),
    );
    let std_error = CMatrix::from_iterator(
        n,
        n,
        (0..n * n)
            .map(|e| Complex64::new(total[2 * e].std_error(), total[2 * e + 1].std_error())),
    );
    Ok(MatrixEstimate { mean, std_error })
}

/// Fourier-mode surrogate of the linearized Kuramoto–Sivashinsky equation with a
/// randomly modulated advecting background U(x) = u0 + u1 cos x, on wavenumbers
/// −k_max..=k_max: C = diag(k² − εk⁴), (Vu)_k = −ik(u0 u_k + (u1/2)(u_{k−1} + u_{k+1})).
pub fn kuramoto_sivashinsky_family(k_max: usize, eps: f64, u0: f64, u1: f64, g: f64) -> Result<OperatorFamily> {
    let n = 2 * k_max + 1;
    let k = |i: usize| i as f64 - k_max as f64;
    let c = CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(k(i).powi(2) - eps * k(i).powi(4), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let v = CMatrix::from_fn(n, n, |i, j| {
        let coef = if i == j {
            u0
        } else if i.abs_diff(j) == 1 {
            0.5 * u1
        } else {
            0.0
        };
        Complex64::new(0.0, -k(i) * coef)
    });
    OperatorFamily::constant(c, v, g)
}
