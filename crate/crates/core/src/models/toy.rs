//! Linear toy model on `(q, x, p, y)` with `C = p²/2 - y²/2`.
//!
//! On the branch `y = -p` both frames solve the constraint linearly:
//! `C̄ = y + p` with `x` as reference field, and the same function with `q` as
//! reference field.

use std::sync::Arc;

use super::{split_from_kinematic, ModelSystem};
use crate::error::{GaugeError, Result};
use crate::gauge::{BranchSigns, ConstraintSystem, FrameTemplate, GaugeClock, GaugeFrame};
use crate::phase::CoordinateSplit;

/// Either frame: layout `(q, p, x, y)` in that frame's own naming; the
/// solved form is `ĥ = p` in both.
struct ToyFrame {
    split: Arc<CoordinateSplit>,
    branch: BranchSigns,
}

impl ConstraintSystem for ToyFrame {
    fn split(&self) -> &Arc<CoordinateSplit> {
        &self.split
    }

    fn branch(&self) -> &BranchSigns {
        &self.branch
    }

    fn h(&self, _index: usize, z: &[f64]) -> Result<f64> {
        Ok(z[1])
    }

    fn h_grad(&self, _index: usize, z: &[f64]) -> Option<Result<Vec<f64>>> {
        let mut g = vec![0.0; z.len()];
        g[1] = 1.0;
        Some(Ok(g))
    }

    fn raw(&self, _index: usize, z: &[f64]) -> Result<f64> {
        Ok(0.5 * z[1] * z[1] - 0.5 * z[3] * z[3])
    }

    fn raw_grad(&self, _index: usize, z: &[f64]) -> Option<Result<Vec<f64>>> {
        Some(Ok(vec![0.0, z[1], 0.0, -z[3]]))
    }

    /// Both roots `y = ±p` have either sign, so membership is the solved
    /// relation itself.
    fn check_branch(&self, z: &[f64]) -> Result<()> {
        let residual = (z[3] + z[1]).abs();
        if residual <= 1e-9 * z[1].abs().max(1.0) {
            Ok(())
        } else {
            Err(GaugeError::BranchViolation(format!(
                "toy point has y = {} instead of -p = {}",
                z[3], -z[1]
            )))
        }
    }
}

pub const X_FRAME: &str = "x";
pub const Q_FRAME: &str = "q";

/// The toy model with the clocks of both frames.
#[derive(Debug, Clone)]
pub struct LinearToy {
    pub k: GaugeClock,
    pub k_hat: GaugeClock,
    pub model: ModelSystem,
}

pub fn make_linear_toy(k: GaugeClock, k_hat: GaugeClock) -> LinearToy {
    let labels: Vec<String> = ["q", "x", "p", "y"].iter().map(|s| s.to_string()).collect();
    let idx_x = vec![0, 2, 1, 3];
    let idx_q = vec![1, 3, 0, 2];
    let frame = |idx: &[usize]| ToyFrame {
        split: split_from_kinematic(&labels, 1, 1, idx),
        branch: BranchSigns::single(1),
    };
    let templates = vec![
        Arc::new(FrameTemplate {
            name: X_FRAME.into(),
            reference_labels: vec!["x".into()],
            constraints: Arc::new(frame(&idx_x)),
            kinematic_index: idx_x.clone(),
        }),
        Arc::new(FrameTemplate {
            name: Q_FRAME.into(),
            reference_labels: vec!["q".into()],
            constraints: Arc::new(frame(&idx_q)),
            kinematic_index: idx_q.clone(),
        }),
    ];
    LinearToy {
        k,
        k_hat,
        model: ModelSystem::new("linear_toy", labels, templates),
    }
}

impl LinearToy {
    /// Frame with reference field `x` and clock `k`.
    pub fn frame(&self) -> Result<GaugeFrame> {
        self.model.fixed_frame(X_FRAME, vec![self.k.clone()])
    }

    /// Frame with reference field `q` and clock `k̂`.
    pub fn frame_hat(&self) -> Result<GaugeFrame> {
        self.model.fixed_frame(Q_FRAME, vec![self.k_hat.clone()])
    }

    /// `O_q = q + k - x`.
    pub fn oracle_obs_q(&self, q: f64, x: f64, t: f64) -> f64 {
        q + self.k.value(t) - x
    }

    /// `(q, p) ↦ (k + k̂ - q, -p)`.
    pub fn oracle_rrft(&self, q: f64, p: f64, t: f64, t_hat: f64) -> [f64; 2] {
        [self.k.value(t) + self.k_hat.value(t_hat) - q, -p]
    }

    /// `(ĥ_s∘S, h_s) = (-k̂' p, k' p)`.
    pub fn oracle_hamiltonians(&self, p: f64, t: f64, t_hat: f64) -> (f64, f64) {
        (-self.k_hat.rate(t_hat) * p, self.k.rate(t) * p)
    }
}
