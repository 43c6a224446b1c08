//! Kepler problem at fixed energy.
//!
//! Kinematical coordinates are `(r, φ, p, l)` with
//! `C = (p² + l²/r²)/(2m) - α/r - E`, on the branch `p < 0`, `l < 0`.
//! The angular frame uses `x = φ` with `h(r, p) = √([2m(E - U(r)) - p²] r²)`;
//! the radial frame uses `x̂ = r` with `ĥ(r, l) = √(2m(E - U(r)) - l²/r²)`.
//!
//! Orbit shape parameters depend only on `l`: `r_0 = l²/(mα)` and
//! `1/r_1² = 2mE/l² + 1/r_0²`, with `F(r) = r_1(1/r - 1/r_0)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{split_from_kinematic, ModelSystem};
use crate::error::{GaugeError, Result};
use crate::gauge::{guarded_sqrt, BranchSigns, ConstraintSystem, FrameTemplate, Sign};
use crate::phase::CoordinateSplit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeplerParams {
    pub m: f64,
    pub alpha: f64,
    #[serde(rename = "E")]
    pub energy: f64,
}

impl Default for KeplerParams {
    fn default() -> Self {
        Self {
            m: 1.0,
            alpha: 1.0,
            energy: 0.5,
        }
    }
}

/// Tolerance for clamping `arccos` arguments that overshoot `[-1, 1]`.
pub const ACOS_CLAMP: f64 = 1e-9;

/// `arccos(x)` clamped within [`ACOS_CLAMP`] of the interval.
pub fn clamped_acos(x: f64) -> Result<f64> {
    if !x.is_finite() || x.abs() > 1.0 + ACOS_CLAMP {
        return Err(GaugeError::DomainViolation(format!("arccos argument {x} outside [-1, 1]")));
    }
    Ok(x.clamp(-1.0, 1.0).acos())
}

fn radius_guard(r: f64) -> Result<()> {
    if r > 0.0 {
        Ok(())
    } else {
        Err(GaugeError::BranchViolation(format!("radius {r} is not positive")))
    }
}

/// Angular frame: layout `(r, p, φ, l)`.
struct AngularFrame {
    split: Arc<CoordinateSplit>,
    branch: BranchSigns,
    p: KeplerParams,
}

impl AngularFrame {
    fn radicand(&self, r: f64, pr: f64) -> f64 {
        let KeplerParams { m, alpha, energy } = self.p;
        (2.0 * m * (energy + alpha / r) - pr * pr) * r * r
    }
}

impl ConstraintSystem for AngularFrame {
    fn split(&self) -> &Arc<CoordinateSplit> {
        &self.split
    }

    fn branch(&self) -> &BranchSigns {
        &self.branch
    }

    fn h(&self, _index: usize, z: &[f64]) -> Result<f64> {
        let (r, pr) = (z[0], z[1]);
        radius_guard(r)?;
        let scale = (2.0 * self.p.m * (self.p.energy + self.p.alpha / r)).abs() * r * r + pr * pr * r * r;
        guarded_sqrt(self.radicand(r, pr), scale, "kepler h")
    }

    fn h_grad(&self, index: usize, z: &[f64]) -> Option<Result<Vec<f64>>> {
        let KeplerParams { m, alpha, energy } = self.p;
        Some(self.h(index, z).map(|h| {
            let (r, pr) = (z[0], z[1]);
            let mut g = vec![0.0; z.len()];
            g[0] = (4.0 * m * energy * r + 2.0 * m * alpha - 2.0 * pr * pr * r) / (2.0 * h);
            g[1] = -pr * r * r / h;
            g
        }))
    }

    fn raw(&self, _index: usize, z: &[f64]) -> Result<f64> {
        let (r, pr, l) = (z[0], z[1], z[3]);
        radius_guard(r)?;
        let KeplerParams { m, alpha, energy } = self.p;
        Ok((pr * pr + l * l / (r * r)) / (2.0 * m) - alpha / r - energy)
    }

    fn raw_grad(&self, _index: usize, z: &[f64]) -> Option<Result<Vec<f64>>> {
        let (r, pr, l) = (z[0], z[1], z[3]);
        let KeplerParams { m, alpha, .. } = self.p;
        Some(radius_guard(r).map(|_| vec![-l * l / (m * r * r * r) + alpha / (r * r), pr / m, 0.0, l / (m * r * r)]))
    }

    fn check_true_domain(&self, qp: &[f64]) -> Result<()> {
        if qp[0] > 0.0 {
            Ok(())
        } else {
            Err(GaugeError::RangeViolation(format!("angular frame needs r > 0, got {}", qp[0])))
        }
    }
}

/// Radial frame: layout `(φ, l, r, p)`.
struct RadialFrame {
    split: Arc<CoordinateSplit>,
    branch: BranchSigns,
    p: KeplerParams,
}

impl ConstraintSystem for RadialFrame {
    fn split(&self) -> &Arc<CoordinateSplit> {
        &self.split
    }

    fn branch(&self) -> &BranchSigns {
        &self.branch
    }

    fn h(&self, _index: usize, z: &[f64]) -> Result<f64> {
        let (l, r) = (z[1], z[2]);
        radius_guard(r)?;
        let KeplerParams { m, alpha, energy } = self.p;
        let a = 2.0 * m * (energy + alpha / r);
        let b = l * l / (r * r);
        guarded_sqrt(a - b, a.abs() + b, "kepler ĥ")
    }

    fn h_grad(&self, index: usize, z: &[f64]) -> Option<Result<Vec<f64>>> {
        let KeplerParams { m, alpha, .. } = self.p;
        Some(self.h(index, z).map(|h| {
            let (l, r) = (z[1], z[2]);
            let mut g = vec![0.0; z.len()];
            g[1] = -l / (r * r * h);
            g[2] = (-2.0 * m * alpha / (r * r) + 2.0 * l * l / (r * r * r)) / (2.0 * h);
            g
        }))
    }

    fn raw(&self, _index: usize, z: &[f64]) -> Result<f64> {
        let (l, r, pr) = (z[1], z[2], z[3]);
        radius_guard(r)?;
        let KeplerParams { m, alpha, energy } = self.p;
        Ok((pr * pr + l * l / (r * r)) / (2.0 * m) - alpha / r - energy)
    }

    fn raw_grad(&self, _index: usize, z: &[f64]) -> Option<Result<Vec<f64>>> {
        let (l, r, pr) = (z[1], z[2], z[3]);
        let KeplerParams { m, alpha, .. } = self.p;
        Some(radius_guard(r).map(|_| vec![0.0, l / (m * r * r), -l * l / (m * r * r * r) + alpha / (r * r), pr / m]))
    }

    fn check_true_domain(&self, qp: &[f64]) -> Result<()> {
        if qp[1] < 0.0 {
            Ok(())
        } else {
            Err(GaugeError::RangeViolation(format!("radial frame needs l < 0, got {}", qp[1])))
        }
    }
}

pub const ANGULAR_FRAME: &str = "phi";
pub const RADIAL_FRAME: &str = "r";

/// The Kepler model with its two frames and closed-form oracles.
#[derive(Debug, Clone)]
pub struct Kepler {
    pub params: KeplerParams,
    pub model: ModelSystem,
}

pub fn make_kepler(params: KeplerParams) -> Result<Kepler> {
    let KeplerParams { m, alpha, energy } = params;
    if !(m > 0.0) || !(alpha > 0.0) || !m.is_finite() || !alpha.is_finite() {
        return Err(GaugeError::InvalidArgument(format!(
            "kepler needs m > 0 and alpha > 0, got m = {m}, alpha = {alpha}"
        )));
    }
    if !(energy >= 0.0) || !energy.is_finite() {
        return Err(GaugeError::InvalidArgument(format!("kepler needs E ≥ 0, got {energy}")));
    }
    let labels: Vec<String> = ["r", "phi", "p", "l"].iter().map(|s| s.to_string()).collect();
    let idx_ang = vec![0, 2, 1, 3];
    let idx_rad = vec![1, 3, 0, 2];
    let angular = AngularFrame {
        split: split_from_kinematic(&labels, 1, 1, &idx_ang),
        branch: BranchSigns::uniform(Sign::Negative, 1),
        p: params,
    };
    let radial = RadialFrame {
        split: split_from_kinematic(&labels, 1, 1, &idx_rad),
        branch: BranchSigns::uniform(Sign::Negative, 1),
        p: params,
    };
    let templates = vec![
        Arc::new(FrameTemplate {
            name: ANGULAR_FRAME.into(),
            reference_labels: vec!["phi".into()],
            constraints: Arc::new(angular),
            kinematic_index: idx_ang,
        }),
        Arc::new(FrameTemplate {
            name: RADIAL_FRAME.into(),
            reference_labels: vec!["r".into()],
            constraints: Arc::new(radial),
            kinematic_index: idx_rad,
        }),
    ];
    Ok(Kepler {
        params,
        model: ModelSystem::new("kepler", labels, templates),
    })
}

impl Kepler {
    /// `U(r) = -α/r`.
    pub fn potential(&self, r: f64) -> f64 {
        -self.params.alpha / r
    }

    /// `r_0(l) = l²/(mα)`.
    pub fn r0(&self, l: f64) -> f64 {
        l * l / (self.params.m * self.params.alpha)
    }

    /// `r_1(l)` from `1/r_1² = 2mE/l² + 1/r_0²`.
    pub fn r1(&self, l: f64) -> f64 {
        let r0 = self.r0(l);
        (2.0 * self.params.m * self.params.energy / (l * l) + 1.0 / (r0 * r0)).sqrt().recip()
    }

    /// `F(r) = r_1(1/r - 1/r_0)` for angular momentum `l`.
    pub fn shape_f(&self, r: f64, l: f64) -> f64 {
        self.r1(l) * (1.0 / r - 1.0 / self.r0(l))
    }

    /// `h(r, p) = √([2m(E - U(r)) - p²] r²)`.
    pub fn h(&self, r: f64, p: f64) -> Result<f64> {
        let KeplerParams { m, energy, .. } = self.params;
        let rad = (2.0 * m * (energy - self.potential(r)) - p * p) * r * r;
        guarded_sqrt(rad, rad.abs() + p * p * r * r, "kepler h")
    }

    /// `ĥ(r, l) = √(2m(E - U(r)) - l²/r²)`.
    pub fn h_hat(&self, r: f64, l: f64) -> Result<f64> {
        let KeplerParams { m, energy, .. } = self.params;
        let a = 2.0 * m * (energy - self.potential(r));
        let b = l * l / (r * r);
        guarded_sqrt(a - b, a.abs() + b, "kepler ĥ")
    }

    /// The conserved angle `g = φ - arccos F(r)`.
    pub fn invariant_angle(&self, phi: f64, r: f64, l: f64) -> Result<f64> {
        Ok(phi - clamped_acos(self.shape_f(r, l))?)
    }

    /// Radial-frame observable of `φ` at clock value `k̂`:
    /// `Φ̂ = φ - arccos F(r) + arccos F(k̂)`.
    pub fn oracle_phi_hat(&self, r: f64, phi: f64, l: f64, k_hat: f64) -> Result<f64> {
        Ok(phi - clamped_acos(self.shape_f(r, l))? + clamped_acos(self.shape_f(k_hat, l))?)
    }

    /// Angular-frame observable of `r` at clock value `k`:
    /// `R = r_1 / (r_1/r + F(cos(φ - k) - 1) + √(1 - F²) sin(φ - k))`,
    /// with `l = -h(r, p)`.
    pub fn oracle_shape(&self, r: f64, p: f64, phi: f64, k: f64) -> Result<f64> {
        let l = -self.h(r, p)?;
        let r1 = self.r1(l);
        let f = self.shape_f(r, l);
        if f.abs() > 1.0 + ACOS_CLAMP {
            return Err(GaugeError::DomainViolation(format!("shape parameter F = {f} outside [-1, 1]")));
        }
        let s = (1.0 - f * f).max(0.0).sqrt();
        let d = phi - k;
        Ok(r1 / (r1 / r + f * (d.cos() - 1.0) + s * d.sin()))
    }

    /// The relational map from the angular frame at clock value `k` to the
    /// radial frame at clock value `k̂`:
    /// `(φ, l) = (k - arccos F(r) + arccos F(k̂), -h(r, p))`.
    pub fn oracle_rrft(&self, r: f64, p: f64, k: f64, k_hat: f64) -> Result<[f64; 2]> {
        let l = -self.h(r, p)?;
        Ok([self.oracle_phi_hat(r, k, l, k_hat)?, l])
    }

    /// `(ĥ_s∘S, h_s)`: the pulled-back radial Hamiltonian
    /// `k̂' √(2m(E - U(k̂)) - h²/k̂²)` and the angular one `k' h(r, p)`.
    pub fn oracle_hamiltonians(&self, r: f64, p: f64, k_rate: f64, k_hat: f64, k_hat_rate: f64) -> Result<(f64, f64)> {
        let h = self.h(r, p)?;
        let KeplerParams { m, energy, .. } = self.params;
        let a = 2.0 * m * (energy - self.potential(k_hat));
        let b = h * h / (k_hat * k_hat);
        let pulled = k_hat_rate * guarded_sqrt(a - b, a.abs() + b, "kepler pullback")?;
        Ok((pulled, k_rate * h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Kepler {
        make_kepler(KeplerParams::default()).unwrap()
    }

    #[test]
    fn shape_radii() {
        let k = make_kepler(KeplerParams {
            m: 1.0,
            alpha: 1.0,
            energy: 0.05,
        })
        .unwrap();
        assert!((k.r0(-1.0) - 1.0).abs() < 1e-15);
        assert!((k.r1(-1.0) - 1.1f64.sqrt().recip()).abs() < 1e-15);
        assert!(k.r1(-1.0) < k.r0(-1.0));
    }

    #[test]
    fn oracles_at_the_cut() {
        let k = model();
        let (r, p) = (3.0, -0.4);
        let l = -k.h(r, p).unwrap();
        let phi = 0.7;
        assert!((k.oracle_phi_hat(r, phi, l, r).unwrap() - phi).abs() < 1e-14);
        assert!((k.oracle_shape(r, p, 1.3, 1.3).unwrap() - r).abs() < 1e-13);
    }

    #[test]
    fn angular_and_radial_momenta_agree() {
        // ĥ(r, -h(r, p)) = |p|
        let k = model();
        for (r, p) in [(0.5, -1.0), (2.0, -0.2), (10.0, -0.3)] {
            let l = -k.h(r, p).unwrap();
            assert!((k.h_hat(r, l).unwrap() - p.abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn acos_clamp() {
        assert_eq!(clamped_acos(1.0 + 1e-12).unwrap(), 0.0);
        assert!(clamped_acos(1.0 + 1e-6).is_err());
    }

    #[test]
    fn negative_energy_rejected() {
        assert!(make_kepler(KeplerParams {
            m: 1.0,
            alpha: 1.0,
            energy: -0.1
        })
        .is_err());
    }
}
