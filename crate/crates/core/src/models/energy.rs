//! Mechanics at fixed energy: `C = ½ g^{AB}(K) M_A M_B + U(K) - E`.
//!
//! The solved form is not known in closed form for a general metric and
//! potential, so `h` is obtained by Newton iteration on the raw constraint
//! and its gradient by implicit differentiation,
//! `∂h/∂z = (∂C/∂z)/(∂C/∂y)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{split_from_kinematic, ModelSystem};
use crate::error::{GaugeError, Result};
use crate::gauge::{solve_for_momenta, BranchSigns, ConstraintSystem, FrameTemplate, NewtonOptions, Sign};
use crate::phase::CoordinateSplit;

/// Inverse metric `g^{AB}(K)`; all supported forms are diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Metric {
    Identity,
    /// Constant diagonal entries of `g^{AB}`. Entries may be negative.
    Diagonal { entries: Vec<f64> },
    /// Planar polar coordinates `(r, φ)`: `g^{rr} = 1/m`, `g^{φφ} = 1/(m r²)`.
    Polar { mass: f64 },
}

/// Potential `U(K)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Potential {
    Zero,
    /// `½ ω² |K|²`.
    Harmonic { omega: f64 },
    /// `-α/K^0`.
    Coulomb { alpha: f64 },
}

fn positive_radius(r: f64) -> Result<()> {
    if r > 0.0 {
        Ok(())
    } else {
        Err(GaugeError::BranchViolation(format!("radial coordinate {r} is not positive")))
    }
}

impl Metric {
    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Metric::Identity => Ok(()),
            Metric::Diagonal { entries } if entries.len() != dim => Err(GaugeError::Dimension(format!(
                "diagonal metric needs {dim} entries, got {}",
                entries.len()
            ))),
            Metric::Diagonal { entries } if entries.iter().any(|e| *e == 0.0 || !e.is_finite()) => {
                Err(GaugeError::InvalidArgument("diagonal metric entries must be finite and non-zero".into()))
            }
            Metric::Diagonal { .. } => Ok(()),
            Metric::Polar { mass } if dim != 2 || !(*mass > 0.0) => Err(GaugeError::InvalidArgument(
                "polar metric needs two dimensions and a positive mass".into(),
            )),
            Metric::Polar { .. } => Ok(()),
        }
    }

    /// Diagonal of `g^{AB}` at `K`.
    pub fn diag(&self, k: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            Metric::Identity => vec![1.0; k.len()],
            Metric::Diagonal { entries } => entries.clone(),
            Metric::Polar { mass } => {
                positive_radius(k[0])?;
                vec![1.0 / mass, 1.0 / (mass * k[0] * k[0])]
            }
        })
    }

    /// `∂_C g^{AA}` at `K`, indexed `[C][A]`.
    fn diag_derivatives(&self, k: &[f64]) -> Vec<Vec<f64>> {
        let n = k.len();
        let mut out = vec![vec![0.0; n]; n];
        if let Metric::Polar { mass } = self {
            out[0][1] = -2.0 / (mass * k[0].powi(3));
        }
        out
    }
}

impl Potential {
    fn validate(&self) -> Result<()> {
        match self {
            Potential::Harmonic { omega } if !omega.is_finite() => {
                Err(GaugeError::InvalidArgument("harmonic frequency must be finite".into()))
            }
            Potential::Coulomb { alpha } if !alpha.is_finite() => {
                Err(GaugeError::InvalidArgument("coulomb strength must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, k: &[f64]) -> Result<f64> {
        Ok(match self {
            Potential::Zero => 0.0,
            Potential::Harmonic { omega } => 0.5 * omega * omega * k.iter().map(|v| v * v).sum::<f64>(),
            Potential::Coulomb { alpha } => {
                positive_radius(k[0])?;
                -alpha / k[0]
            }
        })
    }

    fn gradient(&self, k: &[f64]) -> Vec<f64> {
        match self {
            Potential::Zero => vec![0.0; k.len()],
            Potential::Harmonic { omega } => k.iter().map(|v| omega * omega * v).collect(),
            Potential::Coulomb { alpha } => {
                let mut g = vec![0.0; k.len()];
                g[0] = alpha / (k[0] * k[0]);
                g
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct EnergyParams {
    dim: usize,
    metric: Metric,
    potential: Potential,
    energy: f64,
}

impl EnergyParams {
    fn raw(&self, kin: &[f64]) -> Result<f64> {
        let (k, m) = kin.split_at(self.dim);
        let g = self.metric.diag(k)?;
        let kinetic: f64 = g.iter().zip(m).map(|(gi, mi)| 0.5 * gi * mi * mi).sum();
        Ok(kinetic + self.potential.value(k)? - self.energy)
    }

    fn raw_grad(&self, kin: &[f64]) -> Result<Vec<f64>> {
        let (k, m) = kin.split_at(self.dim);
        let g = self.metric.diag(k)?;
        let dg = self.metric.diag_derivatives(k);
        let du = self.potential.gradient(k);
        let mut out = vec![0.0; 2 * self.dim];
        for c in 0..self.dim {
            out[c] = du[c] + dg[c].iter().zip(m).map(|(d, mi)| 0.5 * d * mi * mi).sum::<f64>();
            out[self.dim + c] = g[c] * m[c];
        }
        Ok(out)
    }
}

/// One frame with reference slot `K^j`: layout `(K^{A≠j}, M_{A≠j}, K^j, M_j)`.
struct EnergyFrame {
    split: Arc<CoordinateSplit>,
    branch: BranchSigns,
    kinematic_index: Vec<usize>,
    slot: usize,
    params: Arc<EnergyParams>,
}

impl EnergyFrame {
    fn to_kin(&self, z: &[f64]) -> Vec<f64> {
        let mut kin = vec![0.0; z.len()];
        for (s, &k) in self.kinematic_index.iter().enumerate() {
            kin[k] = z[s];
        }
        kin
    }

    fn from_kin(&self, kin: &[f64]) -> Vec<f64> {
        self.kinematic_index.iter().map(|&k| kin[k]).collect()
    }

    fn solve(&self, z: &[f64]) -> Result<f64> {
        let y_slot = self.split.y(0);
        let mut kin = self.to_kin(z);
        let dim = self.params.dim;
        kin[dim + self.slot] = 0.0;
        let (k, _) = kin.split_at(dim);
        let a = 0.5 * self.params.metric.diag(k)?[self.slot];
        let c = self.params.raw(&kin)?;
        // a y² + c = 0
        let disc = -c / a;
        let scale = c.abs().max(self.params.energy.abs()).max(1.0) / a.abs();
        if disc < -1e-12 * scale {
            return Err(GaugeError::BranchViolation(format!(
                "no real momentum for `{}`: kinetic term would be {:e}",
                self.split.labels()[y_slot],
                disc
            )));
        }
        let sign = self.branch.sign(0).unwrap_or(Sign::Negative).as_f64();
        let guess = sign * ((c.abs() / a.abs()).sqrt() + 1.0);
        let y = solve_for_momenta(self, z, &self.branch, &[guess], NewtonOptions::default())?;
        Ok(y[0])
    }
}

impl ConstraintSystem for EnergyFrame {
    fn split(&self) -> &Arc<CoordinateSplit> {
        &self.split
    }

    fn branch(&self) -> &BranchSigns {
        &self.branch
    }

    fn h(&self, _index: usize, z: &[f64]) -> Result<f64> {
        Ok(-self.solve(z)?)
    }

    fn h_grad(&self, _index: usize, z: &[f64]) -> Option<Result<Vec<f64>>> {
        Some((|| {
            let y = self.solve(z)?;
            let mut on = z.to_vec();
            on[self.split.y(0)] = y;
            let dc = self.from_kin(&self.params.raw_grad(&self.to_kin(&on))?);
            let dcy = dc[self.split.y(0)];
            if dcy == 0.0 {
                return Err(GaugeError::SingularTransversality { condition: f64::INFINITY });
            }
            let mut g: Vec<f64> = dc.iter().map(|d| d / dcy).collect();
            g[self.split.y(0)] = 0.0;
            Ok(g)
        })())
    }

    fn raw(&self, _index: usize, z: &[f64]) -> Result<f64> {
        self.params.raw(&self.to_kin(z))
    }

    fn raw_grad(&self, _index: usize, z: &[f64]) -> Option<Result<Vec<f64>>> {
        Some(self.params.raw_grad(&self.to_kin(z)).map(|g| self.from_kin(&g)))
    }
}

/// A fixed-energy system with frames on chosen reference slots.
#[derive(Debug, Clone)]
pub struct EnergyConstrained {
    pub dim: usize,
    pub metric: Metric,
    pub potential: Potential,
    pub energy: f64,
    pub model: ModelSystem,
}

/// Frame name for reference slot `j`.
pub fn frame_name(slot: usize) -> String {
    format!("K{slot}")
}

/// Builds the model with one frame per `(reference slot, branch sign)`.
pub fn make_energy_constrained(
    dim: usize,
    metric: Metric,
    potential: Potential,
    energy: f64,
    frames: &[(usize, Sign)],
) -> Result<EnergyConstrained> {
    if dim == 0 {
        return Err(GaugeError::InvalidArgument("energy model needs at least one dimension".into()));
    }
    if !energy.is_finite() {
        return Err(GaugeError::InvalidArgument(format!("energy must be finite, got {energy}")));
    }
    metric.validate(dim)?;
    potential.validate()?;
    let params = Arc::new(EnergyParams {
        dim,
        metric: metric.clone(),
        potential: potential.clone(),
        energy,
    });
    let mut labels: Vec<String> = (0..dim).map(|a| format!("K{a}")).collect();
    labels.extend((0..dim).map(|a| format!("M{a}")));
    let mut templates = Vec::with_capacity(frames.len());
    for &(slot, sign) in frames {
        if slot >= dim {
            return Err(GaugeError::InvalidArgument(format!(
                "reference slot {slot} out of range for dimension {dim}"
            )));
        }
        let others: Vec<usize> = (0..dim).filter(|&a| a != slot).collect();
        let mut idx = others.clone();
        idx.extend(others.iter().map(|a| dim + a));
        idx.extend([slot, dim + slot]);
        let frame = EnergyFrame {
            split: split_from_kinematic(&labels, dim - 1, 1, &idx),
            branch: BranchSigns::uniform(sign, 1),
            kinematic_index: idx.clone(),
            slot,
            params: params.clone(),
        };
        templates.push(Arc::new(FrameTemplate {
            name: frame_name(slot),
            reference_labels: vec![labels[slot].clone()],
            constraints: Arc::new(frame),
            kinematic_index: idx,
        }));
    }
    Ok(EnergyConstrained {
        dim,
        metric,
        potential,
        energy,
        model: ModelSystem::new("energy_constrained", labels, templates),
    })
}

impl EnergyConstrained {
    /// `C(K, M)` in kinematical layout.
    pub fn raw_constraint(&self, kin: &[f64]) -> Result<f64> {
        EnergyParams {
            dim: self.dim,
            metric: self.metric.clone(),
            potential: self.potential.clone(),
            energy: self.energy,
        }
        .raw(kin)
    }
}
