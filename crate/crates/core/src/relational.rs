//! Relational observables, reduced Hamiltonians and the two evolution routes.
//!
//! An observable `O_F(t)` is evaluated by flowing a constraint-surface point
//! onto the cut `x = k(t)` and reading `F` there. Evolution in a frame can be
//! computed either by Hamilton's equations of the reduced Hamiltonian
//! `h_s(t) = k̇^I(t) h_I(x = k(t); q, p)` or geometrically, by embedding on
//! one cut and flowing to the next.

use std::sync::Arc;

use crate::error::{GaugeError, Result};
use crate::flow::{flow_to_cut, integrate, FlowOptions};
use crate::gauge::{h_gradient, GaugeFrame};
use crate::phase::{PhasePoint, ScalarField};

/// Finite-difference base step for fields evaluated through a flow.
pub const FLOW_FD_STEP: f64 = 1e-3;

/// `O_F(t)` for a base field `F` in the frame's coordinate layout.
#[derive(Clone)]
pub struct RelationalObservable {
    base: Arc<dyn ScalarField>,
    frame: GaugeFrame,
    t: f64,
    opts: FlowOptions,
}

impl RelationalObservable {
    pub fn new(base: Arc<dyn ScalarField>, frame: GaugeFrame, t: f64) -> Self {
        Self {
            base,
            frame,
            t,
            opts: FlowOptions::default(),
        }
    }

    pub fn with_options(mut self, opts: FlowOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn frame(&self) -> &GaugeFrame {
        &self.frame
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn base(&self) -> &Arc<dyn ScalarField> {
        &self.base
    }

    /// The cut image of `z` for this observable's frame and time.
    pub fn cut_image(&self, z: &[f64]) -> Result<PhasePoint> {
        let point = PhasePoint::new(self.frame.split().clone(), z.to_vec())?;
        flow_to_cut(&self.frame, self.t, &point, &self.opts)
    }
}

impl ScalarField for RelationalObservable {
    fn label(&self) -> String {
        format!("O[{}]({})", self.base.label(), self.t)
    }

    fn eval(&self, z: &[f64]) -> Result<f64> {
        let image = self.cut_image(z)?;
        self.base.eval(&image)
    }

    fn fd_step_hint(&self) -> Option<f64> {
        Some(FLOW_FD_STEP)
    }
}

/// `F(flow_to_cut(frame, t, z))`.
pub fn evaluate_observable(obs: &RelationalObservable, z: &PhasePoint) -> Result<f64> {
    obs.eval(z)
}

/// Values of several base fields at one cut image; the flow runs once.
pub fn evaluate_observables(
    frame: &GaugeFrame,
    t: f64,
    fields: &[&dyn ScalarField],
    z: &PhasePoint,
    opts: &FlowOptions,
) -> Result<Vec<f64>> {
    let image = flow_to_cut(frame, t, z, opts)?;
    fields.iter().map(|f| f.eval(&image)).collect()
}

fn cut_point(frame: &GaugeFrame, t: f64, qp: &[f64]) -> Result<Vec<f64>> {
    let split = frame.split();
    if qp.len() != 2 * split.n_true() {
        return Err(GaugeError::Dimension(format!(
            "frame `{}` has {} true coordinates, got {}",
            frame.name(),
            2 * split.n_true(),
            qp.len()
        )));
    }
    let mut z = vec![0.0; split.dim()];
    z[..qp.len()].copy_from_slice(qp);
    for (i, k) in frame.k(t).into_iter().enumerate() {
        z[split.x(i)] = k;
    }
    Ok(z)
}

/// `h_s(t; q, p) = Σ_I k̇^I(t) h_I(x = k(t); q, p)`.
pub fn reduced_hamiltonian(frame: &GaugeFrame, t: f64, qp: &[f64]) -> Result<f64> {
    let z = cut_point(frame, t, qp)?;
    let sys = frame.constraints();
    let mut total = 0.0;
    for (i, rate) in frame.k_rate(t).into_iter().enumerate() {
        if rate != 0.0 {
            total += rate * sys.h(i, &z)?;
        }
    }
    Ok(total)
}

/// Gradient of `h_s` with respect to the true coordinates `(q…, p…)`.
pub fn reduced_hamiltonian_grad(frame: &GaugeFrame, t: f64, qp: &[f64]) -> Result<Vec<f64>> {
    let z = cut_point(frame, t, qp)?;
    let sys = frame.constraints();
    let mut grad = vec![0.0; qp.len()];
    for (i, rate) in frame.k_rate(t).into_iter().enumerate() {
        if rate != 0.0 {
            let dh = h_gradient(sys, i, &z)?;
            for (g, d) in grad.iter_mut().zip(&dh) {
                *g += rate * d;
            }
        }
    }
    Ok(grad)
}

/// The physical Hamiltonian: `h_s(t)` with the true coordinates replaced by
/// their observables `O_q(t0), O_p(t0)`, evaluated at `z`.
pub fn physical_hamiltonian(frame: &GaugeFrame, t: f64, t0: f64, z: &PhasePoint, opts: &FlowOptions) -> Result<f64> {
    let image = flow_to_cut(frame, t0, z, opts)?;
    reduced_hamiltonian(frame, t, image.true_values())
}

/// Sampled curve in a true sector.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub labels: Vec<String>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }
}

/// Uniform grid of `n` times from `t0` to `t1`; a single sample sits at `t0`.
pub fn time_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![t0],
        _ => (0..n)
            .map(|j| {
                if j == n - 1 {
                    t1
                } else {
                    t0 + (t1 - t0) * j as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

fn true_labels(frame: &GaugeFrame) -> Vec<String> {
    let split = frame.split();
    split.labels()[..2 * split.n_true()].to_vec()
}

/// Integrates `q̇ = ∂h_s/∂p`, `ṗ = -∂h_s/∂q` from `t0` to `t1` and samples
/// `n_samples` uniform times. The integrator parameter is `t` itself, so
/// explicitly time-dependent clocks are handled without further work.
pub fn evolve_hamiltonian(
    frame: &GaugeFrame,
    qp0: &[f64],
    t0: f64,
    t1: f64,
    n_samples: usize,
    opts: &FlowOptions,
) -> Result<Trajectory> {
    if let Some(v) = qp0.iter().find(|v| !v.is_finite()) {
        return Err(GaugeError::NonFiniteEvaluation {
            label: format!("initial value {v}"),
        });
    }
    let n_true = frame.split().n_true();
    let times = time_grid(t0, t1, n_samples.max(1));
    let mut states = Vec::with_capacity(times.len());
    let mut state = qp0.to_vec();
    let mut t_cur = t0;
    let rhs = |t: f64, qp: &[f64], dqp: &mut [f64]| -> Result<()> {
        let g = reduced_hamiltonian_grad(frame, t, qp)?;
        for a in 0..n_true {
            dqp[a] = g[n_true + a];
            dqp[n_true + a] = -g[a];
        }
        Ok(())
    };
    for &t in &times {
        if t != t_cur {
            state = integrate(rhs, &state, t_cur, t, opts)?;
            t_cur = t;
        }
        states.push(state.clone());
    }
    Ok(Trajectory {
        labels: true_labels(frame),
        times,
        states,
    })
}

/// Embeds `qp0` on the cut at `t0`, flows to the cut at `t1` and projects.
pub fn evolve_geometric(frame: &GaugeFrame, qp0: &[f64], t0: f64, t1: f64, opts: &FlowOptions) -> Result<Vec<f64>> {
    let z = frame.embed(t0, qp0)?;
    if t1 == t0 {
        return Ok(frame.project(&z));
    }
    let landed = flow_to_cut(frame, t1, &z, opts)?;
    Ok(frame.project(&landed))
}

/// [`evolve_geometric`] sampled on a uniform time grid.
pub fn evolve_geometric_samples(
    frame: &GaugeFrame,
    qp0: &[f64],
    t0: f64,
    t1: f64,
    n_samples: usize,
    opts: &FlowOptions,
) -> Result<Trajectory> {
    let times = time_grid(t0, t1, n_samples.max(1));
    let z = frame.embed(t0, qp0)?;
    let mut states = Vec::with_capacity(times.len());
    for &t in &times {
        let landed = if t == t0 { z.clone() } else { flow_to_cut(frame, t, &z, opts)? };
        states.push(frame.project(&landed));
    }
    Ok(Trajectory {
        labels: true_labels(frame),
        times,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        assert_eq!(time_grid(0.0, 1.0, 1), vec![0.0]);
        let g = time_grid(0.0, 1.0, 11);
        assert_eq!(g.len(), 11);
        assert_eq!(g[10], 1.0);
        assert!((g[3] - 0.3).abs() < 1e-15);
    }
}
