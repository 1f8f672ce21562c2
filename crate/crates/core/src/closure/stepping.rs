//! Implicit time integration of du/dt = A u.

use crate::error::{invalid, Result};
use crate::ic::richardson_vec;
use crate::linalg::{Csr, Factorization};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeScheme {
    /// Trapezoidal rule; A-stable, second order.
    CrankNicolson,
    /// Trapezoid followed by BDF2 with the coefficient that lets both stages share one
    /// factorization; L-stable, second order. Preferred when the start is stiff.
    TrBdf2,
}

/// Fixed-step integration settings. With `richardson` the result combines steps dt and
/// dt/2 to cancel the second-order error. An optional initial layer is integrated first
/// with its own, smaller step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeStepping {
    pub dt: f64,
    pub scheme: TimeScheme,
    #[serde(default)]
    pub richardson: bool,
    #[serde(default)]
    pub layer: Option<InitialLayer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialLayer {
    pub duration: f64,
    pub dt: f64,
}

impl Default for TimeStepping {
    fn default() -> Self {
        TimeStepping { dt: 1e-3, scheme: TimeScheme::CrankNicolson, richardson: false, layer: None }
    }
}

const ALPHA: f64 = 2.0 - std::f64::consts::SQRT_2;

impl TimeStepping {
    pub fn new(dt: f64, scheme: TimeScheme) -> Self {
        TimeStepping { dt, scheme, richardson: false, layer: None }
    }

    pub fn with_layer(mut self, duration: f64, dt: f64) -> Self {
        self.layer = Some(InitialLayer { duration, dt });
        self
    }

    /// Resolve a relaxation layer of rate `rate` (ten e-folds at fifty steps per e-fold)
    /// unless a layer is already set.
    pub fn resolving_rate(self, rate: f64) -> Self {
        if self.layer.is_some() || rate * self.dt <= 0.02 {
            return self;
        }
        self.with_layer(10.0 / rate, 0.02 / rate)
    }

    pub fn with_richardson(mut self) -> Self {
        self.richardson = true;
        self
    }

    /// (step, count) for each phase covering [0, t].
    fn phases(&self, t: f64) -> Result<Vec<(f64, usize)>> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("time step must be positive, got {}", self.dt)));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(invalid(format!("integration time must be non-negative, got {t}")));
        }
        let count = |span: f64, h: f64| ((span / h) - 1e-9).ceil().max(0.0) as usize;
        let mut out = Vec::new();
        let mut rest = t;
        if let Some(l) = self.layer {
            if !(l.dt > 0.0 && l.duration >= 0.0) {
                return Err(invalid("initial layer needs a positive step and non-negative duration"));
            }
            let d = l.duration.min(t);
            let n = count(d, l.dt);
            if n > 0 {
                out.push((d / n as f64, n));
            }
            rest = t - d;
        }
        let n = count(rest, self.dt);
        if n > 0 {
            out.push((rest / n as f64, n));
        }
        Ok(out)
    }

    /// u(t) for a constant operator.
    pub fn integrate(&self, a: &Csr, u0: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok(self.integrate_batch(a, vec![u0.to_vec()], t)?.remove(0))
    }

    /// Several initial vectors under one operator, sharing the factorizations.
    pub fn integrate_batch(&self, a: &Csr, u0: Vec<Vec<f64>>, t: f64) -> Result<Vec<Vec<f64>>> {
        let phases = self.phases(t)?;
        let run = |refine: usize| -> Result<Vec<Vec<f64>>> {
            let mut u = u0.clone();
            for &(h, n) in &phases {
                u = self.run_constant(a, u, h / refine as f64, n * refine)?;
            }
            Ok(u)
        };
        let coarse = run(1)?;
        if !self.richardson || phases.is_empty() {
            return Ok(coarse);
        }
        let fine = run(2)?;
        Ok(coarse.iter().zip(&fine).map(|(c, f)| richardson_vec(c, f, 2)).collect())
    }

    fn run_constant(&self, a: &Csr, mut us: Vec<Vec<f64>>, h: f64, n: usize) -> Result<Vec<Vec<f64>>> {
        let nn = a.nrows;
        let id = Csr::identity(nn);
        let c = match self.scheme {
            TimeScheme::CrankNicolson => 0.5 * h,
            TimeScheme::TrBdf2 => 0.5 * ALPHA * h,
        };
        let lhs = Factorization::new(&id.axpby(1.0, a, -c))?;
        let mut au = vec![0.0; nn];
        let d = ALPHA * (2.0 - ALPHA);
        let (p, q) = (1.0 / d, (1.0 - ALPHA).powi(2) / d);
        for u in us.iter_mut() {
            for _ in 0..n {
                a.matvec(u, &mut au);
                let mut s: Vec<f64> = u.iter().zip(&au).map(|(x, y)| x + c * y).collect();
                lhs.solve_in_place(&mut s);
                if self.scheme == TimeScheme::TrBdf2 {
                    for (si, ui) in s.iter_mut().zip(u.iter()) {
                        *si = p * *si - q * ui;
                    }
                    lhs.solve_in_place(&mut s);
                }
                *u = s;
            }
        }
        Ok(us)
    }

    /// u(t1) for an operator A(t), rebuilt and refactored every step (Crank–Nicolson
    /// uses A at the step midpoint; TR-BDF2 at the trapezoid midpoint and the step end).
    pub fn integrate_varying<F>(&self, a: F, u0: &[f64], t0: f64, t1: f64) -> Result<Vec<f64>>
    where
        F: Fn(f64) -> Result<Csr>,
    {
        Ok(self.integrate_varying_batch(a, vec![u0.to_vec()], t0, t1)?.remove(0))
    }

    pub fn integrate_varying_batch<F>(&self, a: F, u0: Vec<Vec<f64>>, t0: f64, t1: f64) -> Result<Vec<Vec<f64>>>
    where
        F: Fn(f64) -> Result<Csr>,
    {
        let phases = self.phases(t1 - t0)?;
        let run = |refine: usize| -> Result<Vec<Vec<f64>>> {
            let mut u = u0.clone();
            let mut start = t0;
            for &(h, n) in &phases {
                u = self.run_varying(&a, u, start, h / refine as f64, n * refine)?;
                start += h * n as f64;
            }
            Ok(u)
        };
        let coarse = run(1)?;
        if !self.richardson || phases.is_empty() {
            return Ok(coarse);
        }
        let fine = run(2)?;
        Ok(coarse.iter().zip(&fine).map(|(c, f)| richardson_vec(c, f, 2)).collect())
    }

    fn run_varying<F>(&self, a: &F, mut us: Vec<Vec<f64>>, t0: f64, h: f64, n: usize) -> Result<Vec<Vec<f64>>>
    where
        F: Fn(f64) -> Result<Csr>,
    {
        let d = ALPHA * (2.0 - ALPHA);
        let (p, q) = (1.0 / d, (1.0 - ALPHA).powi(2) / d);
        for k in 0..n {
            let t = t0 + h * k as f64;
            match self.scheme {
                TimeScheme::CrankNicolson => {
                    let am = a(t + 0.5 * h)?;
                    let lhs = Factorization::new(&Csr::identity(am.nrows).axpby(1.0, &am, -0.5 * h))?;
                    for u in us.iter_mut() {
                        *u = cn_apply(&am, &lhs, u, h);
                    }
                }
                TimeScheme::TrBdf2 => {
                    let a1 = a(t + 0.5 * ALPHA * h)?;
                    let l1 = Factorization::new(&Csr::identity(a1.nrows).axpby(1.0, &a1, -0.5 * ALPHA * h))?;
                    let a2 = a(t + h)?;
                    let l2 = Factorization::new(&Csr::identity(a2.nrows).axpby(1.0, &a2, -0.5 * ALPHA * h))?;
                    for u in us.iter_mut() {
                        let s = cn_apply(&a1, &l1, u, ALPHA * h);
                        let mut r: Vec<f64> = s.iter().zip(u.iter()).map(|(si, ui)| p * si - q * ui).collect();
                        l2.solve_in_place(&mut r);
                        *u = r;
                    }
                }
            }
        }
        Ok(us)
    }
}

fn cn_apply(a: &Csr, lhs: &Factorization, u: &[f64], h: f64) -> Vec<f64> {
    let au = a.mul_vec(u);
    let mut s: Vec<f64> = u.iter().zip(&au).map(|(x, y)| x + 0.5 * h * y).collect();
    lhs.solve_in_place(&mut s);
    s
}
