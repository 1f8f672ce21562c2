//! Initial conditions shared by the particle and PDE solvers.

use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Initial scalar T_I(x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// Normalized Gaussian density of standard deviation `width` in every coordinate.
    Gaussian { center: Vec<f64>, width: f64 },
    /// Normalized Gaussian in coordinate `axis` only: a regularized line (plane) source.
    Line { axis: usize, position: f64, width: f64 },
    /// cos(k·x).
    Fourier { wavevector: Vec<f64> },
    /// Product of one-dimensional profiles, one per coordinate.
    Separable { factors: Vec<Profile> },
}

/// One-dimensional factor of a separable initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Profile {
    Constant,
    /// Normalized Gaussian density.
    Gaussian { center: f64, width: f64 },
    Cosine { wavenumber: f64 },
}

impl Profile {
    #[inline]
    fn evaluate(&self, x: f64) -> f64 {
        match *self {
            Profile::Constant => 1.0,
            Profile::Gaussian { center, width } => {
                let d = x - center;
                (-0.5 * d * d / (width * width)).exp() / (width * (2.0 * PI).sqrt())
            }
            Profile::Cosine { wavenumber } => (wavenumber * x).cos(),
        }
    }

    fn heat(&self, kappa: f64, x: f64, t: f64) -> f64 {
        match *self {
            Profile::Constant => 1.0,
            Profile::Gaussian { center, width } => {
                Profile::Gaussian { center, width: (width * width + 2.0 * kappa * t).sqrt() }.evaluate(x)
            }
            Profile::Cosine { wavenumber } => self.evaluate(x) * (-kappa * wavenumber * wavenumber * t).exp(),
        }
    }
}

impl InitialCondition {
    pub fn gaussian(center: Vec<f64>, width: f64) -> Self {
        InitialCondition::Gaussian { center, width }
    }

    /// Check that the condition can be evaluated in `dim` dimensions.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            InitialCondition::Gaussian { center, width } => {
                if center.len() != dim {
                    return Err(invalid(format!("Gaussian centre has {} coordinates, expected {dim}", center.len())));
                }
                if !(*width > 0.0 && width.is_finite()) {
                    return Err(invalid("Gaussian width must be positive"));
                }
            }
            InitialCondition::Line { axis, width, .. } => {
                if *axis >= dim {
                    return Err(invalid(format!("line source axis {axis} out of range for dimension {dim}")));
                }
                if !(*width > 0.0 && width.is_finite()) {
                    return Err(invalid("line source width must be positive"));
                }
            }
            InitialCondition::Fourier { wavevector } => {
                if wavevector.len() != dim {
                    return Err(invalid("wave vector dimension does not match the field"));
                }
            }
            InitialCondition::Separable { factors } => {
                if factors.len() != dim {
                    return Err(invalid(format!("{} profiles for {dim} coordinates", factors.len())));
                }
                if factors.iter().any(|f| matches!(f, Profile::Gaussian { width, .. } if !(*width > 0.0))) {
                    return Err(invalid("Gaussian profile width must be positive"));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match self {
            InitialCondition::Gaussian { center, width } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                let norm = (2.0 * PI * width * width).powf(-0.5 * x.len() as f64);
                norm * (-0.5 * r2 / (width * width)).exp()
            }
            InitialCondition::Line { axis, position, width } => {
                let d = x[*axis] - position;
                (-0.5 * d * d / (width * width)).exp() / (width * (2.0 * PI).sqrt())
            }
            InitialCondition::Fourier { wavevector } => {
                wavevector.iter().zip(x).map(|(k, a)| k * a).sum::<f64>().cos()
            }
            InitialCondition::Separable { factors } => factors.iter().zip(x).map(|(f, &a)| f.evaluate(a)).product(),
        }
    }

    /// Same condition with every Gaussian width replaced (no effect on Fourier modes).
    pub fn with_width(&self, w: f64) -> Self {
        let mut c = self.clone();
        match &mut c {
            InitialCondition::Gaussian { width, .. } | InitialCondition::Line { width, .. } => *width = w,
            InitialCondition::Fourier { .. } => {}
            InitialCondition::Separable { factors } => {
                for f in factors.iter_mut() {
                    if let Profile::Gaussian { width, .. } = f {
                        *width = w;
                    }
                }
            }
        }
        c
    }

    /// Exact solution of ∂_tT = κΔT for this condition.
    pub fn heat_solution(&self, kappa: f64, x: &[f64], t: f64) -> f64 {
        match self {
            InitialCondition::Gaussian { width, .. } | InitialCondition::Line { width, .. } => {
                let w = (width * width + 2.0 * kappa * t).sqrt();
                self.with_width(w).evaluate(x)
            }
            InitialCondition::Fourier { wavevector } => {
                let k2: f64 = wavevector.iter().map(|k| k * k).sum();
                self.evaluate(x) * (-kappa * k2 * t).exp()
            }
            InitialCondition::Separable { factors } => factors.iter().zip(x).map(|(f, &a)| f.heat(kappa, a, t)).product(),
        }
    }
}

/// Eliminate the leading error term of an estimate with error `c h^order`:
/// returns the extrapolation from step `h` (coarse) and `h/2` (fine).
pub fn richardson(coarse: f64, fine: f64, order: i32) -> f64 {
    let f = 2f64.powi(order);
    (f * fine - coarse) / (f - 1.0)
}

/// Elementwise [`richardson`].
pub fn richardson_vec(coarse: &[f64], fine: &[f64], order: i32) -> Vec<f64> {
    coarse.iter().zip(fine).map(|(&c, &f)| richardson(c, f, order)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heat_solution_of_gaussian_spreads() {
        let ic = InitialCondition::gaussian(vec![0.0, 0.0], 0.5);
        let v = ic.heat_solution(1.0, &[0.0, 0.0], 0.375);
        assert!((v - 1.0 / (2.0 * PI * 1.0)).abs() < 1e-15);
        let line = InitialCondition::Line { axis: 0, position: 1.0, width: 0.2 };
        assert_eq!(line.evaluate(&[1.0, 7.0]), line.evaluate(&[1.0, -3.0]));
        assert!(line.validate(1).is_ok() && line.validate(0).is_err());
        let sep = InitialCondition::Separable {
            factors: vec![Profile::Cosine { wavenumber: 2.0 }, Profile::Gaussian { center: 0.0, width: 0.5 }],
        };
        let h = sep.heat_solution(0.5, &[0.3, 0.2], 0.4);
        let expect = (0.6f64).cos() * (-0.8f64).exp() * (-0.5 * 0.04 / 0.65f64).exp() / (0.65 * 2.0 * PI).sqrt();
        assert!((h - expect).abs() < 1e-15);
    }

    #[test]
    fn richardson_removes_leading_term() {
        let f = |h: f64| 2.0 + 3.0 * h * h;
        assert!((richardson(f(0.1), f(0.05), 2) - 2.0).abs() < 1e-14);
    }
}
