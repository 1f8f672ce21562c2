//! Deterministic velocity fields with analytic Jacobians, and their N-point lifting.

use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const TAU: f64 = 2.0 * PI;

/// One term `c·cos(φ) + s·sin(φ)` with `φ = 2π(ky·y/L_y + kt·t/L_t)` of a shear profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    pub ky: i32,
    #[serde(default)]
    pub kt: i32,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// Shear profile u(y, t) as a truncated Fourier series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShearProfile {
    pub terms: Vec<FourierTerm>,
    #[serde(default = "unit")]
    pub period_y: f64,
    /// Required when any term has `kt != 0`.
    #[serde(default)]
    pub period_t: Option<f64>,
}

fn unit() -> f64 {
    1.0
}

impl ShearProfile {
    pub fn constant(u: f64) -> Self {
        ShearProfile {
            terms: vec![FourierTerm { ky: 0, kt: 0, cos: u, sin: 0.0 }],
            period_y: 1.0,
            period_t: None,
        }
    }

    /// `u(y) = amplitude · sin(2π k y)` on the unit period.
    pub fn sine(k: i32, amplitude: f64) -> Self {
        ShearProfile {
            terms: vec![FourierTerm { ky: k, kt: 0, cos: 0.0, sin: amplitude }],
            period_y: 1.0,
            period_t: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.period_y > 0.0 && self.period_y.is_finite()) {
            return Err(invalid("shear period_y must be positive"));
        }
        if self.terms.is_empty() {
            return Err(invalid("shear profile has no terms"));
        }
        let timed = self.terms.iter().any(|t| t.kt != 0);
        match self.period_t {
            Some(p) if !(p > 0.0 && p.is_finite()) => Err(invalid("shear period_t must be positive")),
            None if timed => Err(invalid("time-dependent shear terms need period_t")),
            _ => {
                if self.terms.iter().any(|t| !(t.cos.is_finite() && t.sin.is_finite())) {
                    Err(invalid("shear coefficients must be finite"))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn phase(&self, term: &FourierTerm, y: f64, t: f64) -> f64 {
        let mut p = TAU * term.ky as f64 * y / self.period_y;
        if term.kt != 0 {
            p += TAU * term.kt as f64 * t / self.period_t.unwrap_or(1.0);
        }
        p
    }

    pub fn value(&self, y: f64, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|term| {
                let (s, c) = self.phase(term, y, t).sin_cos();
                term.cos * c + term.sin * s
            })
            .sum()
    }

    pub fn dy(&self, y: f64, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|term| {
                let (s, c) = self.phase(term, y, t).sin_cos();
                let k = TAU * term.ky as f64 / self.period_y;
                k * (term.sin * c - term.cos * s)
            })
            .sum()
    }

    /// Exact space-time average of u.
    pub fn mean(&self) -> f64 {
        self.terms.iter().filter(|t| t.ky == 0 && t.kt == 0).map(|t| t.cos).sum()
    }

    /// Exact space-time average of u² (Parseval).
    pub fn mean_square(&self) -> f64 {
        // Combine terms sharing a phase direction before squaring.
        let mut modes: Vec<((i32, i32), f64, f64)> = Vec::new();
        for t in &self.terms {
            let (key, c, s) = if t.ky < 0 || (t.ky == 0 && t.kt < 0) {
                ((-t.ky, -t.kt), t.cos, -t.sin)
            } else {
                ((t.ky, t.kt), t.cos, t.sin)
            };
            match modes.iter_mut().find(|m| m.0 == key) {
                Some(m) => {
                    m.1 += c;
                    m.2 += s;
                }
                None => modes.push((key, c, s)),
            }
        }
        modes
            .iter()
            .map(|&(k, c, s)| if k == (0, 0) { c * c } else { 0.5 * (c * c + s * s) })
            .sum()
    }
}

/// Named catalog entries, serialized with a `name` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum FieldCatalogEntry {
    /// Uniform velocity.
    Constant { velocity: Vec<f64> },
    /// v = (y, 0).
    LinearShear,
    /// v = (u(y, t), 0).
    GeneralShear { profile: ShearProfile },
    /// v = (x, −y), or v = x when `dim = 1`.
    Strain {
        #[serde(default = "two")]
        dim: usize,
    },
    /// Cellular flow with stream function sin(2π(x − ε sin(2πt/T))) sin(2πy).
    Cellular {
        #[serde(default)]
        oscillation: Option<Oscillation>,
    },
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oscillation {
    pub amplitude: f64,
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Constant(Vec<f64>),
    LinearShear,
    Shear(ShearProfile),
    Strain1,
    Strain2,
    Cellular(Option<Oscillation>),
}

/// A velocity field on ℝ^d, possibly the N-fold block lifting of a planar field.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    kind: Kind,
    copies: usize,
    name: String,
}

pub fn make_field(entry: &FieldCatalogEntry) -> Result<VelocityField> {
    let (kind, name) = match entry {
        FieldCatalogEntry::Constant { velocity } => {
            if velocity.is_empty() || velocity.iter().any(|v| !v.is_finite()) {
                return Err(invalid("constant velocity must be a non-empty finite vector"));
            }
            (Kind::Constant(velocity.clone()), "constant")
        }
        FieldCatalogEntry::LinearShear => (Kind::LinearShear, "linear_shear"),
        FieldCatalogEntry::GeneralShear { profile } => {
            profile.validate()?;
            (Kind::Shear(profile.clone()), "general_shear")
        }
        FieldCatalogEntry::Strain { dim: 1 } => (Kind::Strain1, "strain"),
        FieldCatalogEntry::Strain { dim: 2 } => (Kind::Strain2, "strain"),
        FieldCatalogEntry::Strain { dim } => {
            return Err(invalid(format!("strain is defined for dim 1 or 2, got {dim}")))
        }
        FieldCatalogEntry::Cellular { oscillation } => {
            if let Some(o) = oscillation {
                if !(o.period > 0.0 && o.amplitude.is_finite()) {
                    return Err(invalid("cellular oscillation needs a positive period"));
                }
            }
            (Kind::Cellular(*oscillation), "cellular")
        }
    };
    Ok(VelocityField { kind, copies: 1, name: name.to_string() })
}

/// Look up a catalog entry by name with default parameters.
pub fn field_by_name(name: &str) -> Result<VelocityField> {
    use crate::error::Error;
    let entry = match name {
        "linear_shear" => FieldCatalogEntry::LinearShear,
        "strain" => FieldCatalogEntry::Strain { dim: 2 },
        "strain_1d" => FieldCatalogEntry::Strain { dim: 1 },
        "cellular" => FieldCatalogEntry::Cellular { oscillation: None },
        "sine_shear" => FieldCatalogEntry::GeneralShear { profile: ShearProfile::sine(1, 1.0) },
        other => return Err(Error::UnknownField(other.to_string())),
    };
    make_field(&entry)
}

/// Replicate a planar field into ℝ^{2N}: block j is the base field evaluated at (x_j, y_j).
pub fn lift_npoint(field: &VelocityField, n: usize) -> Result<VelocityField> {
    if n < 1 {
        return Err(invalid("lifting needs N ≥ 1"));
    }
    if field.copies != 1 || field.base_dim() != 2 {
        return Err(invalid("lifting needs an unlifted two-dimensional field"));
    }
    Ok(VelocityField { kind: field.kind.clone(), copies: n, name: field.name.clone() })
}

impl VelocityField {
    pub fn name(&self) -> &str {
        &self.name
    }

    fn base_dim(&self) -> usize {
        match &self.kind {
            Kind::Constant(v) => v.len(),
            Kind::Strain1 => 1,
            _ => 2,
        }
    }

    pub fn dim(&self) -> usize {
        self.base_dim() * self.copies
    }

    /// Number of lifted copies (1 for an ordinary field).
    pub fn copies(&self) -> usize {
        self.copies
    }

    pub fn is_shear(&self) -> bool {
        matches!(self.kind, Kind::LinearShear | Kind::Shear(_))
            || matches!(&self.kind, Kind::Constant(v) if v.len() == 2 && v[1] == 0.0)
    }

    /// The shear profile u(y, t) if the field is of the form (u(y, t), 0).
    pub fn shear_profile(&self) -> Option<ShearProfile> {
        match &self.kind {
            Kind::Shear(p) => Some(p.clone()),
            Kind::Constant(v) if v.len() == 2 && v[1] == 0.0 => Some(ShearProfile::constant(v[0])),
            _ => None,
        }
    }

    pub fn divergence_free(&self) -> bool {
        !matches!(self.kind, Kind::Strain1)
    }

    /// Spatial period per axis, if the field is periodic in every direction.
    /// Fields that do not depend on a coordinate report the period of the others.
    pub fn spatial_period(&self) -> Option<Vec<f64>> {
        let base = match &self.kind {
            Kind::Constant(v) => vec![1.0; v.len()],
            Kind::Shear(p) => vec![p.period_y, p.period_y],
            Kind::Cellular(_) => vec![1.0, 1.0],
            Kind::LinearShear | Kind::Strain1 | Kind::Strain2 => return None,
        };
        Some(base.repeat(self.copies))
    }

    pub fn temporal_period(&self) -> Option<f64> {
        match &self.kind {
            Kind::Shear(p) if p.terms.iter().any(|t| t.kt != 0) => p.period_t,
            Kind::Cellular(Some(o)) if o.amplitude != 0.0 => Some(o.period),
            _ => None,
        }
    }

    pub fn is_steady(&self) -> bool {
        self.temporal_period().is_none()
    }

    fn eval_block(&self, x: &[f64], t: f64, out: &mut [f64]) {
        match &self.kind {
            Kind::Constant(v) => out.copy_from_slice(v),
            Kind::LinearShear => {
                out[0] = x[1];
                out[1] = 0.0;
            }
            Kind::Shear(p) => {
                out[0] = p.value(x[1], t);
                out[1] = 0.0;
            }
            Kind::Strain1 => out[0] = x[0],
            Kind::Strain2 => {
                out[0] = x[0];
                out[1] = -x[1];
            }
            Kind::Cellular(osc) => {
                let (sx, cx) = (TAU * (x[0] - shift(osc, t))).sin_cos();
                let (sy, cy) = (TAU * x[1]).sin_cos();
                out[0] = TAU * sx * cy;
                out[1] = -TAU * cx * sy;
            }
        }
    }

    /// Row-major Jacobian of one block, `J[i][j] = ∂v_i/∂x_j`.
    fn jac_block(&self, x: &[f64], t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match &self.kind {
            Kind::Constant(_) => {}
            Kind::LinearShear => out[1] = 1.0,
            Kind::Shear(p) => out[1] = p.dy(x[1], t),
            Kind::Strain1 => out[0] = 1.0,
            Kind::Strain2 => {
                out[0] = 1.0;
                out[3] = -1.0;
            }
            Kind::Cellular(osc) => {
                let (sx, cx) = (TAU * (x[0] - shift(osc, t))).sin_cos();
                let (sy, cy) = (TAU * x[1]).sin_cos();
                let k2 = TAU * TAU;
                out[0] = k2 * cx * cy;
                out[1] = -k2 * sx * sy;
                out[2] = k2 * sx * sy;
                out[3] = -k2 * cx * cy;
            }
        }
    }

    /// Velocity at `(x, t)` written into `out` (length `dim`).
    pub fn evaluate_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let b = self.base_dim();
        for j in 0..self.copies {
            self.eval_block(&x[j * b..(j + 1) * b], t, &mut out[j * b..(j + 1) * b]);
        }
    }

    pub fn evaluate(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.evaluate_into(x, t, &mut out);
        out
    }

    /// Row-major `dim × dim` Jacobian; block diagonal for lifted fields.
    pub fn jacobian(&self, x: &[f64], t: f64) -> Vec<f64> {
        let b = self.base_dim();
        let d = self.dim();
        let mut out = vec![0.0; d * d];
        let mut blk = vec![0.0; b * b];
        for j in 0..self.copies {
            self.jac_block(&x[j * b..(j + 1) * b], t, &mut blk);
            for r in 0..b {
                for c in 0..b {
                    out[(j * b + r) * d + j * b + c] = blk[r * b + c];
                }
            }
        }
        out
    }

    pub fn divergence(&self, x: &[f64], t: f64) -> f64 {
        let d = self.dim();
        let j = self.jacobian(x, t);
        (0..d).map(|i| j[i * d + i]).sum()
    }

    /// `(g²/2)(∇v)v` written into `out`.
    pub fn drift_into(&self, g: f64, x: &[f64], t: f64, out: &mut [f64]) {
        let b = self.base_dim();
        let mut v = [0.0; 4];
        let mut jb = [0.0; 16];
        let half_g2 = 0.5 * g * g;
        for j in 0..self.copies {
            let xs = &x[j * b..(j + 1) * b];
            self.eval_block(xs, t, &mut v[..b]);
            self.jac_block(xs, t, &mut jb[..b * b]);
            for r in 0..b {
                let s: f64 = (0..b).map(|c| jb[r * b + c] * v[c]).sum();
                out[j * b + r] = half_g2 * s;
            }
        }
    }
}

fn shift(osc: &Option<Oscillation>, t: f64) -> f64 {
    match osc {
        Some(o) => o.amplitude * (TAU * t / o.period).sin(),
        None => 0.0,
    }
}

/// Itô drift `(g²/2)(∇v)v` produced by converting the Stratonovich transport noise
/// `−g v ∘ dB` to Itô form.
pub fn advection_drift_correction(field: &VelocityField, g: f64, x: &[f64], t: f64) -> Vec<f64> {
    let mut out = vec![0.0; field.dim()];
    field.drift_into(g, x, t, &mut out);
    out
}
