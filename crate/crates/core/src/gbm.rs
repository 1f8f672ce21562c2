//! Moments of A_t^{(μ)} = ∫₀ᵗ e^{2(B_s + μs)} ds and of the strain-flow scalar
//! X_t = g (4π A_{g²t})^{-1/2}.
//!
//! Exact values come from the Dufresne integral representation (any real order
//! r > −3/2), the coth integral for E[A_t^{-1}], and the negative-moment recurrence
//! for higher orders. Long-time laws and a Monte Carlo sampler back them up.

use crate::error::{invalid, Error, Result};
use crate::noise::{normal, path_rng};
use crate::quadrature::{integrate, Tolerance};
use crate::special::{gamma, hyp2f1, hyp2f1_complement, rgamma};
use crate::stats::{loglog_fit, Accumulator, LinearFit};
use rayon::prelude::*;
use std::f64::consts::PI;

/// How a moment was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Dufresne,
    Recurrence,
    Coth,
    Asymptotic,
    MonteCarlo,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dufresne => "dufresne",
            Method::Recurrence => "recurrence",
            Method::Coth => "coth",
            Method::Asymptotic => "asymptotic",
            Method::MonteCarlo => "monte-carlo",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "dufresne" | "quadrature" => Method::Dufresne,
            "recurrence" => Method::Recurrence,
            "coth" => Method::Coth,
            "asymptotic" => Method::Asymptotic,
            "monte-carlo" | "mc" => Method::MonteCarlo,
            other => return Err(invalid(format!("unknown moment method `{other}`"))),
        })
    }
}

/// A value with its error estimate (quadrature bound or one standard error).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moment {
    pub value: f64,
    pub error: f64,
    pub method: Method,
}

/// One row of a [`MomentTable`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEntry {
    pub order: f64,
    pub t: f64,
    pub moment: Moment,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MomentTable {
    pub entries: Vec<MomentEntry>,
}

impl MomentTable {
    pub fn push(&mut self, order: f64, t: f64, moment: Moment) {
        self.entries.push(MomentEntry { order, t, moment });
    }

    /// CSV with columns `order,t,method,value,error`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("order,t,method,value,error\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{:.16e},{:.16e},{},{:.16e},{:.16e}\n",
                e.order,
                e.t,
                e.moment.method.as_str(),
                e.moment.value,
                e.moment.error
            ));
        }
        s
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("time must be positive, got {t}")))
    }
}

/// `y/sinh(y)`, accurate near zero.
fn y_over_sinh(y: f64) -> f64 {
    if y.abs() < 1e-4 {
        1.0 - y * y / 6.0
    } else {
        y / y.sinh()
    }
}

/// y·φ_μ(r, y), the non-Gaussian factor of the Dufresne integrand.
fn y_phi(r: f64, mu: f64, y: f64) -> Result<f64> {
    if y == 0.0 {
        return Ok(if r >= -0.5 {
            0.0
        } else if r == -1.0 {
            1.0
        } else {
            f64::INFINITY
        });
    }
    if r == -1.0 {
        // cosh((μ−1)y)/sinh(y), written to stay finite for large y.
        if y < 1.0 {
            return Ok(((mu - 1.0) * y).cosh() * y_over_sinh(y));
        }
        let num = ((mu - 2.0) * y).exp() + (-mu * y).exp();
        return Ok(y * num / (-(-2.0 * y).exp_m1()));
    }
    let z = -(-2.0 * y).exp_m1();
    let (a, b, c) = (mu + 2.0 * r + 1.0, 1.0 + r, 2.0 + 2.0 * r);
    let f = if z <= 0.5 {
        hyp2f1(a, b, c, z)?
    } else {
        hyp2f1_complement(a, b, c, (-2.0 * y).exp(), -2.0 * y)?
    };
    let pre = gamma(r + 1.0) * rgamma(2.0 * r + 2.0);
    Ok(y * pre * (-mu * y).exp() * z.powf(1.0 + 2.0 * r) * f)
}

/// Exponential growth rate bound of φ_μ(r, ·), used to place the tail cutoff.
fn growth_rate(r: f64, mu: f64) -> f64 {
    (mu + 2.0 * r).max(-mu).max(0.0) + 1.0
}

/// Upper limit Y(t) beyond which the Gaussian factor makes the integrand < e^{-45}
/// relative to its bulk.
fn cutoff(r: f64, mu: f64, t: f64) -> f64 {
    growth_rate(r, mu) * t + (90.0 * t).sqrt() + 1.0
}

/// log of the Gaussian weight e^{−μ²t/2} e^{−y²/2t} / √(2πt³).
fn log_weight(mu: f64, t: f64, y: f64) -> f64 {
    -0.5 * mu * mu * t - y * y / (2.0 * t) - 1.5 * t.ln() - 0.5 * (2.0 * PI).ln()
}

/// ∫₀^∞ w(t,y) · mult(y) · yφ_μ(r,y) dy with a singularity-removing substitution
/// y = u^q, q = 1/(3 + 2r), when r < −½.
fn dufresne_integral<M: Fn(f64) -> f64>(
    r: f64,
    mu: f64,
    t: f64,
    mult: M,
    tol: Tolerance,
) -> Result<(f64, f64)> {
    let ymax = cutoff(r, mu, t);
    let failure = std::cell::Cell::new(None);
    let integrand = |y: f64| -> f64 {
        match y_phi(r, mu, y) {
            Ok(v) => (log_weight(mu, t, y)).exp() * mult(y) * v,
            Err(e) => {
                failure.set(Some(e.to_string()));
                0.0
            }
        }
    };
    let q = if r < -0.5 && r != -1.0 { 1.0 / (3.0 + 2.0 * r) } else { 1.0 };
    let res = if q == 1.0 {
        integrate(integrand, 0.0, ymax, tol)?
    } else {
        let umax = ymax.powf(1.0 / q);
        integrate(
            |u: f64| {
                if u == 0.0 {
                    return 0.0;
                }
                let y = u.powf(q);
                integrand(y) * q * y / u
            },
            0.0,
            umax,
            tol,
        )?
    };
    if let Some(msg) = failure.take() {
        return Err(Error::Quadrature(msg));
    }
    Ok((res.value, res.error))
}

fn default_tol() -> Tolerance {
    Tolerance { abs: 1e-10, rel: 1e-12, max_intervals: 4000 }
}

fn tight_tol() -> Tolerance {
    Tolerance { abs: 1e-300, rel: 1e-14, max_intervals: 20000 }
}

/// E[(2A_t^{(μ)})^r] by the Dufresne integral, for r > −3/2.
pub fn dufresne_moment(r: f64, mu: f64, t: f64) -> Result<Moment> {
    dufresne_moment_tol(r, mu, t, default_tol())
}

fn dufresne_moment_tol(r: f64, mu: f64, t: f64, tol: Tolerance) -> Result<Moment> {
    check_time(t)?;
    if !(r > -1.5) {
        return Err(Error::Domain(format!("Dufresne quadrature needs r > -3/2, got {r}")));
    }
    if !mu.is_finite() {
        return Err(invalid("drift must be finite"));
    }
    let (value, error) = dufresne_integral(r, mu, t, |_| 1.0, tol)?;
    Ok(Moment { value, error, method: Method::Dufresne })
}

/// E[(A_t^{(μ)})^r] = 2^{−r} E[(2A)^r].
pub fn a_moment(r: f64, mu: f64, t: f64) -> Result<Moment> {
    let m = dufresne_moment(r, mu, t)?;
    let s = 2f64.powf(-r);
    Ok(Moment { value: s * m.value, error: s * m.error, method: m.method })
}

fn k_coth(k: f64) -> f64 {
    let x = 0.5 * PI * k;
    if x.abs() < 1e-4 {
        // k coth(πk/2) → 2/π with the next series term.
        (2.0 / PI) * (1.0 + x * x / 3.0)
    } else {
        k / x.tanh()
    }
}

/// E[A_t^{-1}] = ∫₀^∞ k e^{−k²t/2} coth(πk/2) dk (driftless).
pub fn inverse_moment_coth(t: f64) -> Result<Moment> {
    inverse_moment_coth_tol(t, default_tol())
}

fn inverse_moment_coth_tol(t: f64, tol: Tolerance) -> Result<Moment> {
    check_time(t)?;
    let kmax = (90.0 / t).sqrt() + 1.0 / t.sqrt();
    let q = integrate(|k| k_coth(k) * (-0.5 * k * k * t).exp(), 0.0, kmax, tol)?;
    Ok(Moment { value: q.value, error: q.error, method: Method::Coth })
}

/// First `terms` (1..=3) terms of the long-time expansion of E[A_t^{-1}].
pub fn inverse_moment_asymptotic(t: f64, terms: usize) -> f64 {
    let s2 = std::f64::consts::SQRT_2;
    let parts = [
        (2.0 / (PI * t)).sqrt(),
        PI.powf(1.5) / (6.0 * s2 * t.powf(1.5)),
        -PI.powf(3.5) / (120.0 * s2 * t.powf(2.5)),
    ];
    parts.iter().take(terms.min(3)).sum()
}

/// Leading long-time law E[A_t^{-n}] ≈ Γ(n) / (√π 2^{1/2−n}) · t^{-1/2}.
pub fn asym_neg_moment(n: f64, t: f64) -> Result<f64> {
    if !(n > 0.0) {
        return Err(invalid(format!("order must be positive, got {n}")));
    }
    check_time(t)?;
    Ok(gamma(n) / (PI.sqrt() * 2f64.powf(0.5 - n)) * t.powf(-0.5))
}

/// Derivatives ℓ^{(1..=k)} in t of ℓ(t) = −(3/2)ln t − y²/(2t) − μ²t/2.
fn log_weight_derivatives(mu: f64, t: f64, y: f64, k: usize) -> Vec<f64> {
    let mut d = Vec::with_capacity(k);
    let mut fact = 1.0; // (j−1)!
    for j in 1..=k {
        if j > 1 {
            fact *= (j - 1) as f64;
        }
        let sgn = if j % 2 == 0 { 1.0 } else { -1.0 }; // (−1)^j
        let mut v = 1.5 * sgn * fact / t.powi(j as i32) // −(3/2)(−1)^{j−1}(j−1)! t^{−j}
            - 0.5 * y * y * sgn * fact * j as f64 / t.powi(j as i32 + 1);
        if j == 1 {
            v -= 0.5 * mu * mu;
        }
        d.push(v);
    }
    d
}

/// Complete Bell polynomials Y_0..Y_k of the given derivatives.
fn bell(x: &[f64]) -> Vec<f64> {
    let k = x.len();
    let mut y = vec![0.0; k + 1];
    y[0] = 1.0;
    for n in 0..k {
        let mut binom = 1.0;
        let mut s = 0.0;
        for i in 0..=n {
            s += binom * y[n - i] * x[i];
            binom = binom * (n - i) as f64 / (i + 1) as f64;
        }
        y[n + 1] = s;
    }
    y
}

/// Coefficients p_k of ∏_{i<steps} (2(m+i−μ) − ∂_t/(m+i)) as a polynomial in ∂_t.
fn recurrence_polynomial(m: f64, mu: f64, steps: usize) -> Vec<f64> {
    let mut p = vec![1.0];
    for i in 0..steps {
        let mi = m + i as f64;
        let (a, b) = (2.0 * (mi - mu), -1.0 / mi);
        let mut next = vec![0.0; p.len() + 1];
        for (k, c) in p.iter().enumerate() {
            next[k] += a * c;
            next[k + 1] += b * c;
        }
        p = next;
    }
    p
}

fn check_recurrence_domain(m: f64, mu: f64) -> Result<()> {
    if !(m > 0.0) {
        return Err(Error::Domain(format!("recurrence needs m > 0, got {m}")));
    }
    if 2.0 * m - mu < 0.0 {
        return Err(Error::Domain(format!("recurrence needs 2m − μ ≥ 0 (m = {m}, μ = {mu})")));
    }
    if !(m < 1.5) {
        return Err(Error::Domain(format!(
            "recurrence base E[A^-{m}] needs m < 3/2 for the quadrature"
        )));
    }
    Ok(())
}

/// E[A^{−(m+steps)}] from the base E[A^{−m}] by applying the recurrence `steps` times,
/// with the time derivatives taken under the Dufresne integral.
pub fn neg_moment_chain(m: f64, mu: f64, t: f64, steps: usize) -> Result<Moment> {
    check_time(t)?;
    check_recurrence_domain(m, mu)?;
    let p = recurrence_polynomial(m, mu, steps);
    let k = steps;
    let (v, e) = dufresne_integral(
        -m,
        mu,
        t,
        |y| {
            let b = bell(&log_weight_derivatives(mu, t, y, k));
            p.iter().zip(&b).map(|(c, bk)| c * bk).sum()
        },
        tight_tol(),
    )?;
    let s = 2f64.powf(m);
    Ok(Moment { value: s * v, error: s * e, method: Method::Recurrence })
}

/// E[(A_t^{(μ)})^{−(m+1)}] = 2(m−μ)E[A^{−m}] − (1/m)∂_t E[A^{−m}].
///
/// The derivative is computed under the integral sign and cross-checked with a central
/// difference of step t·1e-5; a relative disagreement above 1e-6 is an error. If the
/// under-integral path fails, the central difference is used.
pub fn neg_moment_recurrence(m: f64, mu: f64, t: f64) -> Result<Moment> {
    check_time(t)?;
    check_recurrence_domain(m, mu)?;
    let fd = || -> Result<Moment> {
        let base = |s: f64| -> Result<f64> {
            Ok(2f64.powf(m) * dufresne_moment_tol(-m, mu, s, tight_tol())?.value)
        };
        let h = t * 1e-5;
        let deriv = (base(t + h)? - base(t - h)?) / (2.0 * h);
        let value = 2.0 * (m - mu) * base(t)? - deriv / m;
        Ok(Moment { value, error: 1e-9 * value.abs(), method: Method::Recurrence })
    };
    match neg_moment_chain(m, mu, t, 1) {
        Ok(direct) => {
            let check = fd()?;
            let rel = (direct.value - check.value).abs() / direct.value.abs().max(1e-300);
            if rel > 1e-6 {
                return Err(Error::DerivativeMismatch(rel));
            }
            Ok(direct)
        }
        Err(_) => fd(),
    }
}

/// E[A_t^{-n}] for driftless A by the cheapest exact route: Dufresne for n < 3/2,
/// otherwise the recurrence from a base in {1/2, 1} (n must then be a half-integer
/// or an integer offset of a base in (0, 3/2)).
pub fn neg_moment(n: f64, t: f64) -> Result<Moment> {
    if !(n > 0.0) {
        return Err(invalid(format!("order must be positive, got {n}")));
    }
    if n < 1.5 {
        let m = dufresne_moment(-n, 0.0, t)?;
        let s = 2f64.powf(n);
        return Ok(Moment { value: s * m.value, error: s * m.error, method: Method::Dufresne });
    }
    let steps = (n - 0.5).floor() as usize;
    let base = n - steps as f64;
    neg_moment_chain(base, 0.0, t, steps)
}

/// Exact E[X_t^n] = g^n (4π)^{-n/2} E[A_{g²t}^{-n/2}].
fn x_moment_exact(n: u32, g: f64, t: f64) -> Result<Moment> {
    let a = neg_moment(n as f64 / 2.0, g * g * t)?;
    let s = g.powi(n as i32) * (4.0 * PI).powf(-(n as f64) / 2.0);
    Ok(Moment { value: s * a.value, error: s * a.error, method: a.method })
}

/// Leading law E[X_t^n] ≈ (2π)^{−n/2−1/2} g^{n−1} Γ(n/2) t^{−1/2}.
pub fn x_moment_asymptotic(n: u32, g: f64, t: f64) -> f64 {
    let nf = n as f64;
    (2.0 * PI).powf(-nf / 2.0 - 0.5) * g.powf(nf - 1.0) * gamma(nf / 2.0) / t.sqrt()
}

/// Leading law of E[X_t^n]/E[X_t²]^{n/2} ≈ (2π)^{(n−2)/4} g^{n/2−1} Γ(n/2) t^{(n−2)/4}.
pub fn normalized_moment_asymptotic(n: u32, g: f64, t: f64) -> f64 {
    let nf = n as f64;
    (2.0 * PI).powf((nf - 2.0) / 4.0) * g.powf(nf / 2.0 - 1.0) * gamma(nf / 2.0)
        * t.powf((nf - 2.0) / 4.0)
}

/// Settings for Monte Carlo estimates of X_t statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings {
    pub n_paths: usize,
    /// Step in the rescaled time τ = g²t.
    pub dtau: f64,
    pub seed: u64,
}

/// E[X_t^n] by the requested method.
pub fn x_moment(n: u32, g: f64, t: f64, method: Method, mc: Option<McSettings>) -> Result<Moment> {
    if n < 1 {
        return Err(invalid("moment order must be ≥ 1"));
    }
    if !(g > 0.0 && g.is_finite()) {
        return Err(invalid(format!("amplitude must be positive, got {g}")));
    }
    check_time(t)?;
    match method {
        Method::Asymptotic => Ok(Moment {
            value: x_moment_asymptotic(n, g, t),
            error: f64::NAN,
            method: Method::Asymptotic,
        }),
        Method::Dufresne | Method::Recurrence | Method::Coth => x_moment_exact(n, g, t),
        Method::MonteCarlo => {
            let mc = mc.ok_or_else(|| invalid("Monte Carlo moments need settings"))?;
            let stats = x_statistics_mc(g, &[t], n.max(2) as usize, mc)?;
            Ok(stats[0].raw[n as usize - 1])
        }
    }
}

/// Monte Carlo raw moments E[X^p], p = 1..=max_order, at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct XStatistics {
    pub t: f64,
    pub raw: Vec<Moment>,
}

impl XStatistics {
    /// Normalized central moment E[(X − EX)^n] / Var^{n/2}.
    pub fn normalized_central(&self, n: usize) -> f64 {
        let raw: Vec<f64> = self.raw.iter().map(|m| m.value).collect();
        normalized_central(&raw, n)
    }
}

/// Normalized central moment from raw moments `raw[p-1] = E[X^p]`.
pub fn normalized_central(raw: &[f64], n: usize) -> f64 {
    let m = |p: usize| if p == 0 { 1.0 } else { raw[p - 1] };
    let mean = m(1);
    let central = |k: usize| -> f64 {
        let mut s = 0.0;
        let mut binom = 1.0;
        for j in 0..=k {
            s += binom * m(k - j) * (-mean).powi(j as i32);
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
        s
    };
    central(n) / central(2).powf(n as f64 / 2.0)
}

/// Sampled driftless A_τ at a set of rescaled times, by the trapezoid rule on a
/// streaming path with a floating exponent offset (so no A or intermediate overflows).
fn sample_log_a(rng: &mut impl rand::Rng, dtau: f64, marks: &[usize], out: &mut [f64]) {
    let sd = dtau.sqrt();
    let mut b = 0.0f64;
    let mut offset = 0.0f64;
    let mut prev = 1.0f64; // e^{2b − offset}
    let mut acc = 0.0f64; // A · e^{−offset}
    let mut next = 0;
    let last = *marks.last().unwrap_or(&0);
    for k in 1..=last {
        b += sd * normal(rng);
        let mut e = (2.0 * b - offset).exp();
        if e > 1e250 || (e < 1e-250 && acc < 1e-250) {
            let shift = 2.0 * b - offset;
            let f = (-shift).exp();
            acc *= f;
            prev *= f;
            offset += shift;
            e = 1.0;
        }
        acc += 0.5 * dtau * (prev + e);
        prev = e;
        while next < marks.len() && marks[next] == k {
            out[next] = acc.ln() + offset;
            next += 1;
        }
    }
}

/// Monte Carlo raw moments of X_t = g(4πA_{g²t})^{-1/2} at each time in `times`.
///
/// Paths are generated per index from `seed` and reduced in index order, so results
/// do not depend on thread count.
pub fn x_statistics_mc(
    g: f64,
    times: &[f64],
    max_order: usize,
    mc: McSettings,
) -> Result<Vec<XStatistics>> {
    if !(g > 0.0) || mc.n_paths < 2 || !(mc.dtau > 0.0) || max_order < 1 {
        return Err(invalid("invalid Monte Carlo settings"));
    }
    for w in times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(invalid("times must be strictly increasing"));
        }
    }
    times.iter().try_for_each(|&t| check_time(t))?;
    let marks: Vec<usize> =
        times.iter().map(|t| ((g * g * t / mc.dtau).round() as usize).max(1)).collect();
    let nt = times.len();
    const BLOCK: usize = 1024;
    let n_blocks = mc.n_paths.div_ceil(BLOCK);
    let prefactor = g / (4.0 * PI).sqrt();
    let blocks: Vec<Vec<Accumulator>> = (0..n_blocks)
        .into_par_iter()
        .map(|blk| {
            let mut accs = vec![Accumulator::new(); nt * max_order];
            let mut log_a = vec![0.0; nt];
            let end = ((blk + 1) * BLOCK).min(mc.n_paths);
            for i in blk * BLOCK..end {
                let mut rng = path_rng(mc.seed, i as u64);
                sample_log_a(&mut rng, mc.dtau, &marks, &mut log_a);
                for (j, la) in log_a.iter().enumerate() {
                    let x = prefactor * (-0.5 * la).exp();
                    let mut p = 1.0;
                    for o in 0..max_order {
                        p *= x;
                        accs[j * max_order + o].push(p);
                    }
                }
            }
            accs
        })
        .collect();
    let mut total = vec![Accumulator::new(); nt * max_order];
    for b in &blocks {
        for (t, a) in total.iter_mut().zip(b) {
            t.merge(a);
        }
    }
    Ok((0..nt)
        .map(|j| XStatistics {
            t: marks[j] as f64 * mc.dtau / (g * g),
            raw: (0..max_order)
                .map(|o| {
                    let a = &total[j * max_order + o];
                    Moment { value: a.mean(), error: a.std_error(), method: Method::MonteCarlo }
                })
                .collect(),
        })
        .collect())
}

/// Fitted growth exponent of the normalized central moment of order n.
#[derive(Debug, Clone, PartialEq)]
pub struct IntermittencyFit {
    pub n: usize,
    pub times: Vec<f64>,
    pub normalized: Vec<f64>,
    pub fit: LinearFit,
    /// The theoretical exponent (n − 2)/4.
    pub expected: f64,
    /// Set when R² < 0.99.
    pub degraded: bool,
}

/// Log-log slope of E[(X−EX)^n]/Var^{n/2} over `times`.
pub fn intermittency_exponent(
    n: usize,
    g: f64,
    times: &[f64],
    method: Method,
    mc: Option<McSettings>,
) -> Result<IntermittencyFit> {
    if n < 2 {
        return Err(invalid("normalized moments need n ≥ 2"));
    }
    if times.len() < 2 {
        return Err(invalid("need at least two times"));
    }
    let (ts, normalized): (Vec<f64>, Vec<f64>) = match method {
        Method::MonteCarlo => {
            let mc = mc.ok_or_else(|| invalid("Monte Carlo fit needs settings"))?;
            let stats = x_statistics_mc(g, times, n, mc)?;
            stats.iter().map(|s| (s.t, s.normalized_central(n))).unzip()
        }
        _ => {
            let mut out = Vec::with_capacity(times.len());
            for &t in times {
                let raw = (1..=n)
                    .map(|p| x_moment_exact(p as u32, g, t).map(|m| m.value))
                    .collect::<Result<Vec<f64>>>()?;
                out.push((t, normalized_central(&raw, n)));
            }
            out.into_iter().unzip()
        }
    };
    if normalized.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Domain("normalized moment not positive; cannot fit".into()));
    }
    let fit = if n == 2 {
        LinearFit { slope: 0.0, intercept: 0.0, r_squared: 1.0 }
    } else {
        loglog_fit(&ts, &normalized)
    };
    Ok(IntermittencyFit {
        n,
        times: ts,
        normalized,
        degraded: fit.r_squared < 0.99,
        fit,
        expected: (n as f64 - 2.0) / 4.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeroth_moment_is_one() {
        for &t in &[0.3, 1.0, 4.0] {
            let m = dufresne_moment(0.0, 0.0, t).unwrap();
            assert!((m.value - 1.0).abs() < 1e-9, "t={t}: {}", m.value);
        }
    }

    #[test]
    fn half_inverse_moment_is_exact() {
        for &t in &[0.5, 1.0, 2.0, 5.0] {
            let v = a_moment(-0.5, 0.0, t).unwrap().value;
            assert!((v * t.sqrt() - 1.0).abs() < 1e-8, "t={t}: {v}");
        }
        let m = dufresne_moment(-0.5, 0.0, 1.0).unwrap();
        assert!((m.value - 0.5f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn first_positive_moment_matches_closed_form() {
        // E[A_t] = (e^{2t} − 1)/2 for μ = 0.
        let t = 0.7;
        let v = a_moment(1.0, 0.0, t).unwrap().value;
        let exact = ((2.0 * t).exp() - 1.0) / 2.0;
        assert!((v - exact).abs() < 1e-9 * exact, "{v} vs {exact}");
        // With drift, E e^{2B_s + 2μs} = e^{(2+2μ)s}.
        let mu = 0.4;
        let v = a_moment(1.0, mu, t).unwrap().value;
        let c = 2.0 + 2.0 * mu;
        let exact = ((c * t).exp() - 1.0) / c;
        assert!((v - exact).abs() < 1e-9 * exact, "{v} vs {exact}");
    }

    #[test]
    fn dufresne_at_minus_one_equals_half_coth() {
        let t = 2.0;
        let d = dufresne_moment(-1.0, 0.0, t).unwrap().value;
        let c = inverse_moment_coth(t).unwrap().value;
        assert!((d - 0.5 * c).abs() < 1e-8, "{d} vs {}", 0.5 * c);
    }

    #[test]
    fn substitution_branch_is_continuous() {
        // r just either side of −1 and −1/2 must give nearby values.
        let t = 1.0;
        let a = dufresne_moment(-1.0 + 1e-6, 0.0, t).unwrap().value;
        let b = dufresne_moment(-1.0, 0.0, t).unwrap().value;
        let c = dufresne_moment(-1.0 - 1e-6, 0.0, t).unwrap().value;
        assert!((a - b).abs() < 1e-5 && (c - b).abs() < 1e-5, "{a} {b} {c}");
        let lo = dufresne_moment(-1.3, 0.0, t).unwrap().value;
        assert!(lo.is_finite() && lo > b);
    }

    #[test]
    fn coth_long_time_and_asymptotics() {
        let t = 1e4;
        let v = inverse_moment_coth(t).unwrap().value;
        assert!((v / (2.0 / (PI * t)).sqrt() - 1.0).abs() < 1e-3);
        let t = 2.0;
        let v = inverse_moment_coth(t).unwrap().value;
        let third = PI.powf(3.5) / (120.0 * 2f64.sqrt() * t.powf(2.5));
        assert!((v - inverse_moment_asymptotic(t, 3)).abs() < third);
        let vals: Vec<f64> =
            [1.0, 2.0, 4.0, 8.0].iter().map(|&t| inverse_moment_coth(t).unwrap().value).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn asymptotic_terms_improve_in_order() {
        for &t in &[10.0, 30.0, 100.0] {
            let v = inverse_moment_coth(t).unwrap().value;
            let e: Vec<f64> = (1..=3).map(|k| (v - inverse_moment_asymptotic(t, k)).abs()).collect();
            assert!(e[0] > e[1] && e[1] > e[2], "t={t}: {e:?}");
        }
    }

    #[test]
    fn leading_negative_moment_law() {
        let t = 3.7;
        assert!((asym_neg_moment(1.0, t).unwrap() - (2.0 / (PI * t)).sqrt()).abs() < 1e-15);
        assert!((asym_neg_moment(0.5, t).unwrap() - t.powf(-0.5)).abs() < 1e-15);
        let t = 1e3;
        let r = asym_neg_moment(1.0, t).unwrap() / inverse_moment_coth(t).unwrap().value;
        assert!((r - 1.0).abs() < 2e-2);
        assert!(asym_neg_moment(0.0, 1.0).is_err());
    }

    #[test]
    fn bell_polynomials_low_order() {
        let y = bell(&[2.0, 3.0, 5.0]);
        // Y1 = x1, Y2 = x1² + x2, Y3 = x1³ + 3x1x2 + x3.
        assert_eq!(y, vec![1.0, 2.0, 7.0, 8.0 + 18.0 + 5.0]);
    }

    #[test]
    fn recurrence_half_gives_closed_form() {
        // E[A^{-3/2}] = t^{-1/2} + t^{-3/2} for μ = 0.
        for &t in &[0.5, 1.0, 3.0] {
            let v = neg_moment_recurrence(0.5, 0.0, t).unwrap().value;
            let exact = t.powf(-0.5) + t.powf(-1.5);
            assert!((v - exact).abs() < 1e-9 * exact, "t={t}: {v} vs {exact}");
        }
    }

    #[test]
    fn recurrence_from_one_matches_coth_route() {
        // E[A^{-2}] = 2E[A^{-1}] + (1/2)∫k³ e^{−k²t/2} coth(πk/2) dk.
        let t = 1.0;
        let v = neg_moment_recurrence(1.0, 0.0, t).unwrap().value;
        let tail = integrate(
            |k| 0.5 * k * k * k_coth(k) * (-0.5 * k * k * t).exp(),
            0.0,
            40.0,
            Tolerance { abs: 1e-14, rel: 1e-14, max_intervals: 4000 },
        )
        .unwrap()
        .value;
        let exact = 2.0 * inverse_moment_coth(t).unwrap().value + tail;
        assert!((v - exact).abs() < 1e-9 * exact, "{v} vs {exact}");
    }

    #[test]
    fn recurrence_chain_is_path_independent() {
        // Two steps under the integral versus one step applied (by central difference)
        // to the once-recurred moment.
        let t = 1.5;
        for &m in &[0.5, 1.0] {
            let twice = neg_moment_chain(m, 0.0, t, 2).unwrap().value;
            let once = |s: f64| neg_moment_chain(m, 0.0, s, 1).unwrap().value;
            let h = t * 1e-4;
            let d = (once(t + h) - once(t - h)) / (2.0 * h);
            let m1 = m + 1.0;
            let stepped = 2.0 * m1 * once(t) - d / m1;
            assert!((twice - stepped).abs() < 1e-6 * twice, "m={m}: {twice} vs {stepped}");
        }
        // And the m = 1/2 chain reproduces the closed form of E[A^{-3/2}] exactly.
        let base = t.powf(-0.5) + t.powf(-1.5);
        let dbase = -0.5 * t.powf(-1.5) - 1.5 * t.powf(-2.5);
        let manual = 2.0 * 1.5 * base - dbase / 1.5;
        let twice = neg_moment_chain(0.5, 0.0, t, 2).unwrap().value;
        assert!((twice - manual).abs() < 1e-9 * manual, "{twice} vs {manual}");
    }

    #[test]
    fn recurrence_domain_checks() {
        assert!(neg_moment_recurrence(0.5, 2.0, 1.0).is_err());
        assert!(neg_moment_recurrence(0.0, 0.0, 1.0).is_err());
        assert!(dufresne_moment(-1.5, 0.0, 1.0).is_err());
        assert!(dufresne_moment(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn x_mean_is_exact() {
        for &g in &[0.5, 1.0, 3.0] {
            let m = x_moment(1, g, 1.0, Method::Dufresne, None).unwrap().value;
            assert!((m - (4.0 * PI).powf(-0.5)).abs() < 1e-9);
            let a = x_moment(1, g, 1.0, Method::Asymptotic, None).unwrap().value;
            assert!((a - (4.0 * PI).powf(-0.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn x_second_moment_long_time() {
        let g = 1.0;
        let t = 100.0;
        let lead = x_moment_asymptotic(2, g, t);
        assert!((lead - 0.006_349_4).abs() < 1e-7, "{lead}");
        let exact = x_moment(2, g, t, Method::Dufresne, None).unwrap().value;
        // Next correction of E[A^{-1}] is O(t^{-3/2}).
        let corr = g * g / (4.0 * PI) * PI.powf(1.5) / (6.0 * 2f64.sqrt() * (g * g * t).powf(1.5));
        assert!((exact - lead).abs() <= 1.5 * corr, "{exact} vs {lead} (corr {corr})");
    }

    #[test]
    fn normalized_second_moment_is_one() {
        let fit = intermittency_exponent(2, 1.0, &[1.0, 10.0, 100.0], Method::Dufresne, None).unwrap();
        assert!(fit.normalized.iter().all(|v| (v - 1.0).abs() < 1e-9));
        assert_eq!(fit.fit.slope, 0.0);
    }

    #[test]
    fn mc_mean_matches_exact() {
        let mc = McSettings { n_paths: 20_000, dtau: 0.01, seed: 3 };
        let s = x_statistics_mc(1.0, &[1.0], 2, mc).unwrap();
        let m = s[0].raw[0];
        assert!((m.value - (4.0 * PI).powf(-0.5)).abs() < 3.0 * m.error + 2e-3 * m.value);
    }

    #[test]
    fn table_csv_shape() {
        let mut tab = MomentTable::default();
        tab.push(-0.5, 1.0, a_moment(-0.5, 0.0, 1.0).unwrap());
        let csv = tab.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "order,t,method,value,error");
        assert_eq!(lines.len(), 2);
        assert!(lines[1].contains("dufresne"));
    }
}
