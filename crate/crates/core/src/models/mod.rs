//! Built-in constrained systems with closed-form oracles.

use std::sync::Arc;

use crate::error::{GaugeError, Result};
use crate::gauge::{FrameTemplate, GaugeClock, GaugeFrame};
use crate::phase::CoordinateSplit;

pub mod energy;
pub mod kepler;
pub mod lattice;
pub mod particle;
pub mod toy;

pub use energy::{make_energy_constrained, EnergyConstrained, Metric, Potential};
pub use kepler::{make_kepler, Kepler, KeplerParams};
pub use lattice::{make_lattice_pft, pft_generators, verify_boost_hamiltonian, LatticePft, LatticePftParams};
pub use particle::{make_relativistic_particle, RelativisticParticle, RelativisticParticleParams};
pub use toy::{make_linear_toy, LinearToy};

/// A constrained system: its kinematical coordinates and the frames that
/// can be built on it.
#[derive(Debug, Clone)]
pub struct ModelSystem {
    pub name: String,
    pub kinematic_labels: Vec<String>,
    templates: Vec<Arc<FrameTemplate>>,
}

impl ModelSystem {
    pub fn new(name: impl Into<String>, kinematic_labels: Vec<String>, templates: Vec<Arc<FrameTemplate>>) -> Self {
        Self {
            name: name.into(),
            kinematic_labels,
            templates,
        }
    }

    pub fn frame_names(&self) -> Vec<&str> {
        self.templates.iter().map(|t| t.name.as_str()).collect()
    }

    pub fn template(&self, name: &str) -> Result<Arc<FrameTemplate>> {
        self.templates
            .iter()
            .find(|t| t.name == name)
            .cloned()
            .ok_or_else(|| GaugeError::InvalidArgument(format!("model `{}` has no frame `{name}`", self.name)))
    }

    /// A frame with clocks; at least one clock must run.
    pub fn frame(&self, name: &str, clocks: Vec<GaugeClock>) -> Result<GaugeFrame> {
        GaugeFrame::new(self.template(name)?, clocks)
    }

    /// A frame whose clocks may all be constant.
    pub fn fixed_frame(&self, name: &str, clocks: Vec<GaugeClock>) -> Result<GaugeFrame> {
        GaugeFrame::fixed_cut(self.template(name)?, clocks)
    }
}

/// Coordinate split for a frame whose slots are the given kinematical
/// indices in `(q…, p…, x…, y…)` order.
pub(crate) fn split_from_kinematic(
    kinematic_labels: &[String],
    n_true: usize,
    n_gauge: usize,
    kinematic_index: &[usize],
) -> Arc<CoordinateSplit> {
    let labels = kinematic_index.iter().map(|&k| kinematic_labels[k].clone()).collect();
    Arc::new(CoordinateSplit::new(n_true, n_gauge, labels).expect("built-in frame layout is valid"))
}
