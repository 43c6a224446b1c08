//! Relativistic particle in `D + 1` dimensional Minkowski space.
//!
//! Kinematical coordinates are `(K^0, …, K^D, M_0, …, M_D)` with the mass
//! shell `C = -M_0² + Σ_a M_a² + m²`. The branch is `M_0 < 0`, `M_1 < 0`.
//! Frame `K0` uses `x = K^0` and solves `M_0 = -√(m² + p_1² + e)`; frame `K1`
//! uses `x̂ = K^1` and solves `M_1 = -√(p̂_1² - m² - ê)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{split_from_kinematic, ModelSystem};
use crate::error::{GaugeError, Result};
use crate::gauge::{guarded_sqrt, BranchSigns, ConstraintSystem, FrameTemplate, Sign};
use crate::phase::CoordinateSplit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativisticParticleParams {
    /// Spatial dimension.
    pub d: usize,
    pub m: f64,
}

impl Default for RelativisticParticleParams {
    fn default() -> Self {
        Self { d: 1, m: 1.0 }
    }
}

/// Frame `K0`: layout `(K^1…K^D, M_1…M_D, K^0, M_0)`.
struct TimeFrame {
    split: Arc<CoordinateSplit>,
    branch: BranchSigns,
    d: usize,
    m: f64,
}

impl TimeFrame {
    fn p_sq(&self, z: &[f64]) -> f64 {
        (0..self.d).map(|a| z[self.d + a].powi(2)).sum()
    }
}

impl ConstraintSystem for TimeFrame {
    fn split(&self) -> &Arc<CoordinateSplit> {
        &self.split
    }

    fn branch(&self) -> &BranchSigns {
        &self.branch
    }

    fn h(&self, _index: usize, z: &[f64]) -> Result<f64> {
        let r = self.m * self.m + self.p_sq(z);
        guarded_sqrt(r, r, "particle h")
    }

    fn h_grad(&self, index: usize, z: &[f64]) -> Option<Result<Vec<f64>>> {
        Some(self.h(index, z).map(|h| {
            let mut g = vec![0.0; z.len()];
            for a in 0..self.d {
                g[self.d + a] = z[self.d + a] / h;
            }
            g
        }))
    }

    fn raw(&self, _index: usize, z: &[f64]) -> Result<f64> {
        let y = z[self.split.y(0)];
        Ok(-y * y + self.p_sq(z) + self.m * self.m)
    }

    fn raw_grad(&self, _index: usize, z: &[f64]) -> Option<Result<Vec<f64>>> {
        let mut g = vec![0.0; z.len()];
        for a in 0..self.d {
            g[self.d + a] = 2.0 * z[self.d + a];
        }
        g[self.split.y(0)] = -2.0 * z[self.split.y(0)];
        Some(Ok(g))
    }
}

/// Frame `K1`: layout `(K^0, K^2…K^D, M_0, M_2…M_D, K^1, M_1)`.
struct SpaceFrame {
    split: Arc<CoordinateSplit>,
    branch: BranchSigns,
    d: usize,
    m: f64,
}

impl SpaceFrame {
    fn e_hat(&self, z: &[f64]) -> f64 {
        (1..self.d).map(|a| z[self.d + a].powi(2)).sum()
    }
}

impl ConstraintSystem for SpaceFrame {
    fn split(&self) -> &Arc<CoordinateSplit> {
        &self.split
    }

    fn branch(&self) -> &BranchSigns {
        &self.branch
    }

    fn h(&self, _index: usize, z: &[f64]) -> Result<f64> {
        let p1 = z[self.d];
        let scale = p1 * p1 + self.m * self.m;
        guarded_sqrt(p1 * p1 - self.m * self.m - self.e_hat(z), scale, "particle ĥ")
    }

    fn h_grad(&self, index: usize, z: &[f64]) -> Option<Result<Vec<f64>>> {
        Some(self.h(index, z).map(|h| {
            let mut g = vec![0.0; z.len()];
            g[self.d] = z[self.d] / h;
            for a in 1..self.d {
                g[self.d + a] = -z[self.d + a] / h;
            }
            g
        }))
    }

    fn raw(&self, _index: usize, z: &[f64]) -> Result<f64> {
        let p1 = z[self.d];
        let y = z[self.split.y(0)];
        Ok(-p1 * p1 + y * y + self.e_hat(z) + self.m * self.m)
    }

    fn raw_grad(&self, _index: usize, z: &[f64]) -> Option<Result<Vec<f64>>> {
        let mut g = vec![0.0; z.len()];
        g[self.d] = -2.0 * z[self.d];
        for a in 1..self.d {
            g[self.d + a] = 2.0 * z[self.d + a];
        }
        g[self.split.y(0)] = 2.0 * z[self.split.y(0)];
        Some(Ok(g))
    }

    fn check_true_domain(&self, qp: &[f64]) -> Result<()> {
        let p1 = qp[self.d];
        let e_hat: f64 = (1..self.d).map(|a| qp[self.d + a].powi(2)).sum();
        if !(p1 < 0.0) || p1 * p1 < self.m * self.m + e_hat {
            return Err(GaugeError::RangeViolation(format!(
                "frame K1 needs p̂_1 < 0 and p̂_1² ≥ m² + ê, got p̂_1 = {p1}"
            )));
        }
        Ok(())
    }
}

/// The particle model with its two frames and closed-form oracles.
#[derive(Debug, Clone)]
pub struct RelativisticParticle {
    pub params: RelativisticParticleParams,
    pub model: ModelSystem,
}

/// Frame names.
pub const TIME_FRAME: &str = "K0";
pub const SPACE_FRAME: &str = "K1";

pub fn make_relativistic_particle(params: RelativisticParticleParams) -> Result<RelativisticParticle> {
    let RelativisticParticleParams { d, m } = params;
    if d == 0 {
        return Err(GaugeError::InvalidArgument("particle needs d ≥ 1".into()));
    }
    if !(m > 0.0) || !m.is_finite() {
        return Err(GaugeError::InvalidArgument(format!("particle mass must be positive, got {m}")));
    }
    let n = d + 1;
    let mut labels: Vec<String> = (0..n).map(|a| format!("K{a}")).collect();
    labels.extend((0..n).map(|a| format!("M{a}")));

    // K0 frame: q^a = K^a, p_a = M_a (a ≥ 1), x = K^0, y = M_0
    let mut idx1: Vec<usize> = (1..n).collect();
    idx1.extend((1..n).map(|a| n + a));
    idx1.extend([0, n]);
    let time = TimeFrame {
        split: split_from_kinematic(&labels, d, 1, &idx1),
        branch: BranchSigns::uniform(Sign::Negative, 1),
        d,
        m,
    };

    // K1 frame: q̂^1 = K^0, q̂^a = K^a (a ≥ 2), x̂ = K^1, ŷ = M_1
    let mut idx2: Vec<usize> = std::iter::once(0).chain(2..n).collect();
    idx2.extend(std::iter::once(n).chain((2..n).map(|a| n + a)));
    idx2.extend([1, n + 1]);
    let space = SpaceFrame {
        split: split_from_kinematic(&labels, d, 1, &idx2),
        branch: BranchSigns::uniform(Sign::Negative, 1),
        d,
        m,
    };

    let templates = vec![
        Arc::new(FrameTemplate {
            name: TIME_FRAME.into(),
            reference_labels: vec!["K0".into()],
            constraints: Arc::new(time),
            kinematic_index: idx1,
        }),
        Arc::new(FrameTemplate {
            name: SPACE_FRAME.into(),
            reference_labels: vec!["K1".into()],
            constraints: Arc::new(space),
            kinematic_index: idx2,
        }),
    ];
    Ok(RelativisticParticle {
        params,
        model: ModelSystem::new("relativistic_particle", labels, templates),
    })
}

impl RelativisticParticle {
    fn e_of(p: &[f64]) -> f64 {
        p.iter().skip(1).map(|v| v * v).sum()
    }

    /// `h(p) = √(m² + p_1² + e)`.
    pub fn h(&self, p: &[f64]) -> f64 {
        let m = self.params.m;
        (m * m + p.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// `ĥ(p̂) = √(p̂_1² - m² - ê)`; `None` outside its domain.
    pub fn h_hat(&self, p_hat: &[f64]) -> Option<f64> {
        let m = self.params.m;
        let r = p_hat[0] * p_hat[0] - m * m - Self::e_of(p_hat);
        (r >= 0.0).then(|| r.sqrt())
    }

    /// Observables of frame `K0` at a point `(q, p, x)`:
    /// `Q^a = q^a + (k - x) p_a / √(m² + p_1² + E)`, `P_a = p_a`.
    pub fn oracle_obs(&self, q: &[f64], p: &[f64], x: f64, k: f64) -> Vec<f64> {
        let h = self.h(p);
        let mut out: Vec<f64> = q.iter().zip(p).map(|(qa, pa)| qa + (k - x) * pa / h).collect();
        out.extend_from_slice(p);
        out
    }

    /// The relational map from frame `K0` at clock value `k` to frame `K1`
    /// at clock value `k_hat`, in true coordinates `(Q, P) ↦ (Q̂, P̂)`.
    pub fn oracle_rrft(&self, q: &[f64], p: &[f64], k: f64, k_hat: f64) -> Vec<f64> {
        let d = self.params.d;
        let root = self.h(p);
        let p1 = p[0];
        let mut out = vec![0.0; 2 * d];
        out[0] = k + (k_hat - q[0]) * root / p1;
        for a in 1..d {
            out[a] = q[a] + (k_hat - q[0]) * p[a] / p1;
        }
        out[d] = -root;
        out[d + 1..].copy_from_slice(&p[1..]);
        out
    }

    /// `ĥ_s(S(q, p))` for clock rate `k_hat_rate`: `-k̂' p_1`.
    pub fn oracle_pullback(&self, p: &[f64], k_hat_rate: f64) -> f64 {
        -k_hat_rate * p[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge::solve_for_momenta;
    use crate::gauge::NewtonOptions;

    #[test]
    fn layouts() {
        let p = make_relativistic_particle(RelativisticParticleParams { d: 3, m: 1.0 }).unwrap();
        let t = p.model.template(TIME_FRAME).unwrap();
        assert_eq!(
            t.constraints.split().labels(),
            ["K1", "K2", "K3", "M1", "M2", "M3", "K0", "M0"]
        );
        let s = p.model.template(SPACE_FRAME).unwrap();
        assert_eq!(
            s.constraints.split().labels(),
            ["K0", "K2", "K3", "M0", "M2", "M3", "K1", "M1"]
        );
    }

    #[test]
    fn newton_on_mass_shell() {
        let p = make_relativistic_particle(RelativisticParticleParams::default()).unwrap();
        let t = p.model.template(TIME_FRAME).unwrap();
        let sys = t.constraints.as_ref();
        let y = solve_for_momenta(
            sys,
            &[0.0, -1.0, 0.0, 0.0],
            sys.branch(),
            &[-1.0],
            NewtonOptions::default(),
        )
        .unwrap();
        assert!((y[0] + 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(make_relativistic_particle(RelativisticParticleParams { d: 0, m: 1.0 }).is_err());
        assert!(make_relativistic_particle(RelativisticParticleParams { d: 1, m: 0.0 }).is_err());
    }
}
