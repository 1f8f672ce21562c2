//! Gamma-family helpers and the real Gauss hypergeometric function.

use crate::error::{Error, Result};
pub use statrs::function::gamma::{digamma, gamma, ln_gamma};

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x == x.round()
}

/// `1/Γ(x)`, zero at the poles of Γ.
pub fn rgamma(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        0.0
    } else {
        1.0 / gamma(x)
    }
}

/// Pochhammer symbol `(a)_n`.
pub fn poch(a: f64, n: usize) -> f64 {
    (0..n).fold(1.0, |acc, k| acc * (a + k as f64))
}

const SERIES_EPS: f64 = 1e-17;
const MAX_TERMS: usize = 5000;
/// Distance to an integer below which `c - a - b` is treated as integral.
const INTEGER_SNAP: f64 = 1e-9;

/// Gauss hypergeometric series summed directly; valid for |z| < 1 and fast for |z| ≤ ½.
fn series(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..MAX_TERMS {
        let kf = k as f64;
        term *= (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * z;
        sum += term;
        if term == 0.0 || term.abs() <= SERIES_EPS * sum.abs() {
            return Ok(sum);
        }
    }
    Err(Error::Domain(format!("2F1({a}, {b}; {c}; {z}) series did not converge")))
}

/// `₂F₁(a, b; c; z)` for real parameters and real `z < 1`.
///
/// Uses the Gauss series for |z| ≤ ½, the Pfaff transformation for z < -½ and the
/// `z → 1 - z` connection formula otherwise, including the logarithmic forms that
/// arise when `c - a - b` is an integer.
pub fn hyp2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && c.is_finite() && z.is_finite()) {
        return Err(Error::Domain("2F1 arguments must be finite".into()));
    }
    if is_nonpositive_integer(c) {
        return Err(Error::Domain(format!("2F1 undefined for c = {c}")));
    }
    if z >= 1.0 {
        return Err(Error::Domain(format!("2F1 requires z < 1, got {z}")));
    }
    if z == 0.0 || a == 0.0 || b == 0.0 {
        return Ok(1.0);
    }
    // Terminating series: a polynomial in z, and the term recursion hits an exact zero.
    if is_nonpositive_integer(a) || is_nonpositive_integer(b) {
        return series(a, b, c, z);
    }
    if z.abs() <= 0.5 {
        return series(a, b, c, z);
    }
    if z < 0.0 {
        // Pfaff: maps z < -1/2 into (1/3, 1).
        let w = z / (z - 1.0);
        return Ok((1.0 - z).powf(-a) * hyp2f1(a, c - b, c, w)?);
    }
    near_one(a, b, c, z)
}

fn near_one(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    let w = 1.0 - z;
    hyp2f1_complement(a, b, c, w, w.ln())
}

/// `₂F₁(a, b; c; 1 - w)` for `0 < w ≤ ½`, with `ln_w = ln w` supplied separately so
/// that callers can pass arguments whose `w` underflows (`w` may then be 0).
pub fn hyp2f1_complement(a: f64, b: f64, c: f64, w: f64, ln_w: f64) -> Result<f64> {
    if is_nonpositive_integer(c) {
        return Err(Error::Domain(format!("2F1 undefined for c = {c}")));
    }
    if is_nonpositive_integer(a) || is_nonpositive_integer(b) {
        return series(a, b, c, 1.0 - w);
    }
    let s = c - a - b;
    let m = s.round();
    if (s - m).abs() > INTEGER_SNAP {
        let t1 = gamma(c) * gamma(s) * rgamma(c - a) * rgamma(c - b) * series(a, b, 1.0 - s, w)?;
        let t2 = (s * ln_w).exp() * gamma(c) * gamma(-s) * rgamma(a) * rgamma(b)
            * series(c - a, c - b, 1.0 + s, w)?;
        return Ok(t1 + t2);
    }
    if m >= 0.0 {
        Ok(log_case_nonnegative(a, b, m as usize, w, ln_w)? * gamma(a + b + m))
    } else {
        Ok(log_case_negative(a, b, (-m) as usize, w, ln_w)? * gamma(a + b + m))
    }
}

/// `F(a, b; a+b+m; 1-w) / Γ(a+b+m)` for integer m ≥ 0.
fn log_case_nonnegative(a: f64, b: f64, m: usize, w: f64, lw: f64) -> Result<f64> {
    let mf = m as f64;
    let mut finite = 0.0;
    if m > 0 {
        let mut term = 1.0;
        for n in 0..m {
            let nf = n as f64;
            if n > 0 {
                term *= (a + nf - 1.0) * (b + nf - 1.0) / (nf * (nf - mf)) * w;
            }
            finite += term;
        }
        finite *= gamma(mf) * rgamma(a + mf) * rgamma(b + mf);
    }
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    let pre = sign * (mf * lw).exp() * rgamma(a) * rgamma(b);
    let mut coef = 1.0 / gamma(mf + 1.0);
    let (mut pa, mut pb, mut p1, mut pm) = (
        digamma(a + mf),
        digamma(b + mf),
        digamma(1.0),
        digamma(mf + 1.0),
    );
    let mut sum = 0.0;
    for n in 0..MAX_TERMS {
        let nf = n as f64;
        if n > 0 {
            coef *= (a + mf + nf - 1.0) * (b + mf + nf - 1.0) / (nf * (nf + mf)) * w;
            pa += 1.0 / (a + mf + nf - 1.0);
            pb += 1.0 / (b + mf + nf - 1.0);
            p1 += 1.0 / nf;
            pm += 1.0 / (nf + mf);
        }
        let term = coef * (lw - p1 - pm + pa + pb);
        sum += term;
        if n > 2 && term.abs() <= SERIES_EPS * sum.abs().max(1e-300) {
            return Ok(finite - pre * sum);
        }
    }
    Err(Error::Domain("2F1 logarithmic series did not converge".into()))
}

/// `F(a, b; a+b-m; 1-w) / Γ(a+b-m)` for integer m ≥ 1.
fn log_case_negative(a: f64, b: f64, m: usize, w: f64, lw: f64) -> Result<f64> {
    let mf = m as f64;
    let mut finite = 0.0;
    let mut term = 1.0;
    for n in 0..m {
        let nf = n as f64;
        if n > 0 {
            term *= (a - mf + nf - 1.0) * (b - mf + nf - 1.0) / (nf * (nf - mf)) * w;
        }
        finite += term;
    }
    finite *= gamma(mf) * rgamma(a) * rgamma(b) * (-mf * lw).exp();
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    let pre = sign * rgamma(a - mf) * rgamma(b - mf);
    if pre == 0.0 {
        return Ok(finite);
    }
    let mut coef = 1.0 / gamma(mf + 1.0);
    let (mut pa, mut pb, mut p1, mut pm) =
        (digamma(a), digamma(b), digamma(1.0), digamma(mf + 1.0));
    let mut sum = 0.0;
    for n in 0..MAX_TERMS {
        let nf = n as f64;
        if n > 0 {
            coef *= (a + nf - 1.0) * (b + nf - 1.0) / (nf * (nf + mf)) * w;
            pa += 1.0 / (a + nf - 1.0);
            pb += 1.0 / (b + nf - 1.0);
            p1 += 1.0 / nf;
            pm += 1.0 / (nf + mf);
        }
        let term = coef * (lw - p1 - pm + pa + pb);
        sum += term;
        if n > 2 && term.abs() <= SERIES_EPS * sum.abs().max(1e-300) {
            return Ok(finite - pre * sum);
        }
    }
    Err(Error::Domain("2F1 logarithmic series did not converge".into()))
}
