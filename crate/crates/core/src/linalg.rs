//! Sparse and banded linear algebra used by the solvers.

use crate::error::{Error, Result};
use num_complex::Complex64;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Build from (row, col, value) triplets; duplicates are summed and exact zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut trip: Vec<(usize, usize, f64)>) -> Csr {
        trip.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(trip.len());
        let mut values: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        let mut m = Csr { nrows, ncols, indptr, indices, values };
        m.prune();
        m
    }

    fn prune(&mut self) {
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.values[k] != 0.0 {
                    indices.push(self.indices[k]);
                    values.push(self.values[k]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn identity(n: usize) -> Csr {
        Csr::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn diag(d: &[f64]) -> Csr {
        Csr::from_triplets(d.len(), d.len(), d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |k| (r, self.indices[k], self.values[k]))
        })
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.nrows {
            let mut s = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            y[r] = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    pub fn transpose(&self) -> Csr {
        Csr::from_triplets(self.ncols, self.nrows, self.triplets().map(|(r, c, v)| (c, r, v)).collect())
    }

    pub fn matmul(&self, other: &Csr) -> Csr {
        assert_eq!(self.ncols, other.nrows);
        let mut trip = Vec::new();
        let mut acc = vec![0.0; other.ncols];
        let mut touched: Vec<usize> = Vec::new();
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let (c, a) = (self.indices[k], self.values[k]);
                for kk in other.indptr[c]..other.indptr[c + 1] {
                    let j = other.indices[kk];
                    if acc[j] == 0.0 {
                        touched.push(j);
                    }
                    acc[j] += a * other.values[kk];
                }
            }
            for &j in &touched {
                trip.push((r, j, acc[j]));
                acc[j] = 0.0;
            }
            touched.clear();
        }
        Csr::from_triplets(self.nrows, other.ncols, trip)
    }

    /// `a·self + b·other`.
    pub fn axpby(&self, a: f64, other: &Csr, b: f64) -> Csr {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let trip = self
            .triplets()
            .map(|(r, c, v)| (r, c, a * v))
            .chain(other.triplets().map(|(r, c, v)| (r, c, b * v)))
            .collect();
        Csr::from_triplets(self.nrows, self.ncols, trip)
    }

    pub fn scale_rows(&self, d: &[f64]) -> Csr {
        let mut m = self.clone();
        for r in 0..m.nrows {
            for k in m.indptr[r]..m.indptr[r + 1] {
                m.values[k] *= d[r];
            }
        }
        m
    }

    /// Lower and upper bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        let (mut kl, mut ku) = (0, 0);
        for (r, c, _) in self.triplets() {
            if r > c {
                kl = kl.max(r - c);
            } else {
                ku = ku.max(c - r);
            }
        }
        (kl, ku)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Csr) -> Csr {
        let mut trip = Vec::with_capacity(self.nnz() * other.nnz());
        for (r1, c1, v1) in self.triplets() {
            for (r2, c2, v2) in other.triplets() {
                trip.push((r1 * other.nrows + r2, c1 * other.ncols + c2, v1 * v2));
            }
        }
        Csr::from_triplets(self.nrows * other.nrows, self.ncols * other.ncols, trip)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }
}

/// LU factorization with partial pivoting of a banded matrix (LAPACK `gbtrf` layout).
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row-major band storage with `2kl + ku + 1` diagonals per row index.
    ab: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    /// Storage needed for an `n × n` matrix of the given bandwidths, in entries.
    pub fn storage(n: usize, kl: usize, ku: usize) -> usize {
        n * (2 * kl + ku + 1)
    }

    pub fn factor(a: &Csr) -> Result<BandedLu> {
        let n = a.nrows;
        let (kl, ku) = a.bandwidths();
        let ldab = 2 * kl + ku + 1;
        let mut ab = vec![0.0; n * ldab];
        // Column-major band: element (i, j) at ab[j * ldab + kl + ku + i - j].
        for (i, j, v) in a.triplets() {
            ab[j * ldab + kl + ku + i - j] = v;
        }
        let mut lu = BandedLu { n, kl, ku, ab, piv: vec![0; n] };
        lu.factorize()?;
        Ok(lu)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * (2 * self.kl + self.ku + 1) + self.kl + self.ku + i - j
    }

    fn factorize(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let kv = ku + kl;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            // Pivot search in column j, rows j..=j+km.
            let mut p = j;
            let mut best = self.ab[self.idx(j, j)].abs();
            for i in j + 1..=j + km {
                let v = self.ab[self.idx(i, j)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            self.piv[j] = p;
            if best == 0.0 {
                return Err(Error::Convergence(format!("singular matrix at column {j}")));
            }
            let jmax = (j + kv).min(n - 1);
            if p != j {
                for c in j..=jmax {
                    let (a, b) = (self.idx(j, c), self.idx(p, c));
                    self.ab.swap(a, b);
                }
            }
            let d = self.ab[self.idx(j, j)];
            for i in j + 1..=j + km {
                let k = self.idx(i, j);
                self.ab[k] /= d;
            }
            for c in j + 1..=jmax {
                let u = self.ab[self.idx(j, c)];
                if u != 0.0 {
                    for i in j + 1..=j + km {
                        let l = self.ab[self.idx(i, j)];
                        let k = self.idx(i, c);
                        self.ab[k] -= l * u;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for j in 0..n {
            let p = self.piv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                for i in j + 1..=(j + kl).min(n - 1) {
                    b[i] -= self.ab[self.idx(i, j)] * bj;
                }
            }
        }
        let kv = kl + ku;
        for j in (0..n).rev() {
            b[j] /= self.ab[self.idx(j, j)];
            let bj = b[j];
            if bj != 0.0 {
                for i in j.saturating_sub(kv)..j {
                    b[i] -= self.ab[self.idx(i, j)] * bj;
                }
            }
        }
    }
}

/// Direct solver chosen by size: banded LU when the band is compact, dense LU otherwise.
#[derive(Debug, Clone)]
pub enum Factorization {
    Banded(BandedLu),
    Dense(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

/// Largest band storage (entries) before falling back to dense LU.
const BAND_LIMIT: usize = 60_000_000;
const DENSE_LIMIT: usize = 3000;

impl Factorization {
    pub fn new(a: &Csr) -> Result<Factorization> {
        let n = a.nrows;
        let (kl, ku) = a.bandwidths();
        let band = BandedLu::storage(n, kl, ku);
        if band <= BAND_LIMIT && (band <= n * n || n > DENSE_LIMIT) {
            return Ok(Factorization::Banded(BandedLu::factor(a)?));
        }
        if n <= DENSE_LIMIT {
            let lu = a.to_dense().lu();
            if !lu.is_invertible() {
                return Err(Error::Convergence("singular matrix".into()));
            }
            return Ok(Factorization::Dense(lu));
        }
        Err(Error::Memory(format!("system of size {n} with bandwidth ({kl}, {ku}) is too large")))
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        match self {
            Factorization::Banded(lu) => lu.solve_in_place(b),
            Factorization::Dense(lu) => {
                let mut v = nalgebra::DVector::from_column_slice(b);
                lu.solve_mut(&mut v);
                b.copy_from_slice(v.as_slice());
            }
        }
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Outcome of a Krylov solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovInfo {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients for a Hermitian positive definite operator.
pub fn pcg<A>(apply: A, precond: &[f64], b: &[Complex64], tol: f64, max_iter: usize) -> Result<(Vec<Complex64>, KrylovInfo)>
where
    A: Fn(&[Complex64], &mut [Complex64]),
{
    let n = b.len();
    let bn = norm(b);
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    if bn == 0.0 {
        return Ok((x, KrylovInfo { iterations: 0, relative_residual: 0.0 }));
    }
    let mut r = b.to_vec();
    let mut z: Vec<Complex64> = r.iter().zip(precond).map(|(v, p)| v / p).collect();
    let mut p = z.clone();
    let mut ap = vec![Complex64::new(0.0, 0.0); n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm(&r) / bn;
        if rel < tol {
            return Ok((x, KrylovInfo { iterations: it, relative_residual: rel }));
        }
        for i in 0..n {
            z[i] = r[i] / precond[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Convergence(format!("CG stalled after {max_iter} iterations")))
}

/// Right-preconditioned BiCGSTAB for a general operator. `precond` holds a
/// diagonal approximation of the operator.
pub fn bicgstab<A>(apply: A, precond: &[Complex64], b: &[Complex64], tol: f64, max_iter: usize) -> Result<(Vec<Complex64>, KrylovInfo)>
where
    A: Fn(&[Complex64], &mut [Complex64]),
{
    let n = b.len();
    let zero = Complex64::new(0.0, 0.0);
    let bn = norm(b);
    let mut x = vec![zero; n];
    if bn == 0.0 {
        return Ok((x, KrylovInfo { iterations: 0, relative_residual: 0.0 }));
    }
    let mut r = b.to_vec();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0));
    let mut v = vec![zero; n];
    let mut p = vec![zero; n];
    let mut y = vec![zero; n];
    let mut s = vec![zero; n];
    let mut zvec = vec![zero; n];
    let mut t = vec![zero; n];
    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new.norm() == 0.0 {
            return Err(Error::Convergence("BiCGSTAB breakdown".into()));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] / precond[i];
        }
        apply(&y, &mut v);
        alpha = rho / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / bn < tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok((x, KrylovInfo { iterations: it, relative_residual: norm(&s) / bn }));
        }
        for i in 0..n {
            zvec[i] = s[i] / precond[i];
        }
        apply(&zvec, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * y[i] + omega * zvec[i];
            r[i] = s[i] - omega * t[i];
        }
        let rel = norm(&r) / bn;
        if rel < tol {
            return Ok((x, KrylovInfo { iterations: it, relative_residual: rel }));
        }
    }
    Err(Error::Convergence(format!("BiCGSTAB stalled after {max_iter} iterations")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize) -> Csr {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + i as f64 * 0.01));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.5));
            }
            if i + 3 < n {
                t.push((i, i + 3, 0.25));
            }
        }
        Csr::from_triplets(n, n, t)
    }

    #[test]
    fn banded_lu_solves() {
        let a = tridiag(50);
        let x: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let mut b = a.mul_vec(&x);
        BandedLu::factor(&a).unwrap().solve_in_place(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn banded_lu_needs_pivoting() {
        // Zero leading diagonal forces a row swap.
        let a = Csr::from_triplets(3, 3, vec![(0, 1, 1.0), (1, 0, 2.0), (1, 1, 1.0), (1, 2, 1.0), (2, 1, 3.0), (2, 2, 1.0)]);
        let x = [1.0, -2.0, 0.5];
        let mut b = a.mul_vec(&x);
        BandedLu::factor(&a).unwrap().solve_in_place(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-13, "{b:?}");
        }
    }

    #[test]
    fn sparse_products() {
        let a = tridiag(6);
        let d = a.to_dense();
        assert!((a.matmul(&a).to_dense() - &d * &d).abs().max() < 1e-14);
        assert!((a.transpose().to_dense() - d.transpose()).abs().max() < 1e-15);
        let k = Csr::identity(2).kron(&a);
        assert_eq!(k.nrows, 12);
        assert_eq!(k.nnz(), 2 * a.nnz());
    }

    #[test]
    fn krylov_solvers() {
        let n = 40;
        let diag: Vec<f64> = (0..n).map(|i| 2.0 + i as f64).collect();
        let apply_spd = |x: &[Complex64], y: &mut [Complex64]| {
            for i in 0..n {
                let mut s = diag[i] * x[i];
                if i > 0 {
                    s -= x[i - 1];
                }
                if i + 1 < n {
                    s -= x[i + 1];
                }
                y[i] = s;
            }
        };
        let b: Vec<Complex64> = (0..n).map(|i| Complex64::new(1.0, i as f64 * 0.1)).collect();
        let (x, info) = pcg(apply_spd, &diag, &b, 1e-13, 500).unwrap();
        let mut r = vec![Complex64::new(0.0, 0.0); n];
        apply_spd(&x, &mut r);
        assert!(r.iter().zip(&b).all(|(u, v)| (u - v).norm() < 1e-10), "{info:?}");

        let apply_gen = |x: &[Complex64], y: &mut [Complex64]| {
            apply_spd(x, y);
            for i in 0..n {
                y[i] += Complex64::new(0.0, 3.0 * (i as f64 - 20.0)) * x[i];
            }
        };
        let pre: Vec<Complex64> = (0..n).map(|i| Complex64::new(diag[i], 3.0 * (i as f64 - 20.0))).collect();
        let (x, _) = bicgstab(apply_gen, &pre, &b, 1e-13, 500).unwrap();
        apply_gen(&x, &mut r);
        assert!(r.iter().zip(&b).all(|(u, v)| (u - v).norm() < 1e-10));
    }
}
