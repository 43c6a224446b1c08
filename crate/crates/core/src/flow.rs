//! Hamiltonian flows of constraint combinations.
//!
//! The integrator is an embedded Dormand–Prince 5(4) pair with adaptive step
//! control. A step whose stages leave the branch (a radicand guard or a
//! non-finite evaluation fires) is retried with a smaller step, so orbits
//! that graze a branch boundary are followed as far as the step floor
//! allows.

use std::sync::Arc;

use log::debug;

use crate::error::{GaugeError, Result};
use crate::gauge::{constraint_residual, ConstraintSystem, GaugeFrame};
use crate::phase::{gradient, CoordinateSplit, PhasePoint, ScalarField};

/// Integrator tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Largest step as a fraction of the integration span.
    pub max_step_fraction: f64,
    pub max_steps: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_step_fraction: 0.125,
            max_steps: 200_000,
        }
    }
}

impl FlowOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn recoverable(err: &GaugeError) -> bool {
    matches!(
        err,
        GaugeError::BranchViolation(_)
            | GaugeError::NonFiniteEvaluation { .. }
            | GaugeError::DomainViolation(_)
            | GaugeError::NoConvergence { .. }
    )
}

/// Integrates `dy/ds = rhs(s, y)` from `s0` to `s1` (either direction).
pub fn integrate<F>(mut rhs: F, y0: &[f64], s0: f64, s1: f64, opts: &FlowOptions) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let span = s1 - s0;
    if span == 0.0 {
        return Ok(y);
    }
    let dir = span.signum();
    let h_max = span.abs() * opts.max_step_fraction;
    let h_min = 1e-14 * span.abs().max(s0.abs()).max(1.0);

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    rhs(s0, &y, &mut k1)?;
    let mut s = s0;
    let mut h = initial_step(&y, &k1, opts).min(h_max);
    let mut last_rhs_error: Option<GaugeError> = None;

    for _ in 0..opts.max_steps {
        let remaining = (s1 - s) * dir;
        if remaining <= 0.0 {
            return Ok(y);
        }
        // A step that would leave a sliver shorter than h_min takes it along.
        let last = h >= remaining - h_min;
        if last {
            h = remaining;
        }
        if h < h_min && !last {
            return Err(last_rhs_error.unwrap_or(GaugeError::StepFailure { s, step: h }));
        }
        let hs = h * dir;

        let stages = (|| -> Result<()> {
            for i in 0..n {
                tmp[i] = y[i] + hs * A21 * k1[i];
            }
            rhs(s + C2 * hs, &tmp, &mut k2)?;
            for i in 0..n {
                tmp[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i]);
            }
            rhs(s + C3 * hs, &tmp, &mut k3)?;
            for i in 0..n {
                tmp[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            rhs(s + C4 * hs, &tmp, &mut k4)?;
            for i in 0..n {
                tmp[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            rhs(s + C5 * hs, &tmp, &mut k5)?;
            for i in 0..n {
                tmp[i] = y[i]
                    + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            rhs(s + hs, &tmp, &mut k6)?;
            for i in 0..n {
                y_new[i] = y[i]
                    + hs * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }
            rhs(s + hs, &y_new, &mut k7)?;
            Ok(())
        })();

        if let Err(e) = stages {
            if recoverable(&e) {
                debug!("stage evaluation failed at s = {s}, h = {h:e}: {e}");
                last_rhs_error = Some(e);
                h *= 0.25;
                continue;
            }
            return Err(e);
        }

        let mut err_sq = 0.0;
        for i in 0..n {
            let e = hs
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / sc).powi(2);
        }
        let err = (err_sq / n.max(1) as f64).sqrt();
        if !err.is_finite() {
            h *= 0.25;
            continue;
        }
        if err <= 1.0 {
            s = if last { s1 } else { s + hs };
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            last_rhs_error = None;
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * fac).min(h_max);
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
    }
    Err(GaugeError::StepFailure { s, step: h })
}

fn initial_step(y: &[f64], f: &[f64], opts: &FlowOptions) -> f64 {
    let mut d0: f64 = 0.0;
    let mut d1: f64 = 0.0;
    for (yi, fi) in y.iter().zip(f) {
        let sc = opts.atol + opts.rtol * yi.abs();
        d0 += (yi / sc).powi(2);
        d1 += (fi / sc).powi(2);
    }
    let n = y.len().max(1) as f64;
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-3
    } else {
        (0.01 * d0 / d1).max(1e-10)
    }
}

/// The generator `g^I C̄_I` with frozen coefficients.
#[derive(Clone)]
pub struct FlowGenerator {
    constraints: Arc<dyn ConstraintSystem>,
    coefficients: Vec<f64>,
}

impl std::fmt::Debug for FlowGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FlowGenerator")
            .field("coefficients", &self.coefficients)
            .finish()
    }
}

impl FlowGenerator {
    pub fn new(constraints: Arc<dyn ConstraintSystem>, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != constraints.n_constraints() {
            return Err(GaugeError::Dimension(format!(
                "generator needs {} coefficients, got {}",
                constraints.n_constraints(),
                coefficients.len()
            )));
        }
        if let Some(c) = coefficients.iter().find(|c| !c.is_finite()) {
            return Err(GaugeError::InvalidArgument(format!(
                "generator coefficient {c} is not finite"
            )));
        }
        Ok(Self {
            constraints,
            coefficients,
        })
    }

    /// Unit coefficient on constraint `index`, zero elsewhere.
    pub fn unit(constraints: Arc<dyn ConstraintSystem>, index: usize) -> Result<Self> {
        let mut g = vec![0.0; constraints.n_constraints()];
        if index >= g.len() {
            return Err(GaugeError::InvalidArgument(format!(
                "constraint index {index} out of range"
            )));
        }
        g[index] = 1.0;
        Self::new(constraints, g)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn constraints(&self) -> &Arc<dyn ConstraintSystem> {
        &self.constraints
    }

    /// `dz/ds = {g^I C̄_I, z}`.
    pub fn velocity(&self, z: &[f64], out: &mut [f64]) -> Result<()> {
        let grad = self.constraints.generator_grad(&self.coefficients, z)?;
        self.constraints.split().hamiltonian_vector_into(&grad, out);
        Ok(())
    }
}

/// Flows `z0` along the generator up to parameter `s_final`.
pub fn flow(gen: &FlowGenerator, z0: &PhasePoint, s_final: f64, opts: &FlowOptions) -> Result<PhasePoint> {
    if gen.coefficients.iter().all(|c| *c == 0.0) {
        return Ok(z0.clone());
    }
    let out = integrate(|_, z, dz| gen.velocity(z, dz), z0, 0.0, s_final, opts)?;
    z0.with_coords(out)
}

/// Flows `z0` onto the cut `x = k(t)` of `frame` with `g = k(t) - x(z0)`.
pub fn flow_to_cut(frame: &GaugeFrame, t: f64, z0: &PhasePoint, opts: &FlowOptions) -> Result<PhasePoint> {
    let split = frame.split();
    let g: Vec<f64> = frame
        .k(t)
        .into_iter()
        .enumerate()
        .map(|(i, k)| k - z0[split.x(i)])
        .collect();
    let gen = FlowGenerator::new(frame.template().constraints.clone(), g)?;
    flow(&gen, z0, 1.0, opts)
}

/// Flows `z0` by the Hamiltonian vector field of an arbitrary field.
pub fn hamiltonian_flow(
    split: &CoordinateSplit,
    field: &dyn ScalarField,
    z0: &[f64],
    s_final: f64,
    opts: &FlowOptions,
) -> Result<Vec<f64>> {
    integrate(
        |_, z, dz| {
            let g = gradient(field, z, None)?;
            split.hamiltonian_vector_into(&g, dz);
            Ok(())
        },
        z0,
        0.0,
        s_final,
        opts,
    )
}

/// Samples of one gauge orbit.
#[derive(Debug, Clone)]
pub struct OrbitTrace {
    pub generator: FlowGenerator,
    /// `(s, z(s))` in increasing order of `s`.
    pub samples: Vec<(f64, PhasePoint)>,
    /// `max_I |C̄_I|` at each sample.
    pub residuals: Vec<f64>,
    /// Set when the orbit stopped early; carries the error that stopped it.
    pub truncated: Option<GaugeError>,
}

/// Samples the orbit of the unit generator on the frame's active clock index
/// at `n_samples` uniform parameters over `s_range`.
///
/// A flow failure truncates the trace at the last valid sample.
pub fn trace_orbit(
    frame: &GaugeFrame,
    z0: &PhasePoint,
    s_range: (f64, f64),
    n_samples: usize,
    opts: &FlowOptions,
) -> Result<OrbitTrace> {
    if n_samples == 0 {
        return Err(GaugeError::InvalidArgument("orbit needs at least one sample".into()));
    }
    let (a, b) = s_range;
    let gen = FlowGenerator::unit(frame.template().constraints.clone(), frame.active_index())?;
    let sys = frame.constraints();
    let mut trace = OrbitTrace {
        generator: gen.clone(),
        samples: Vec::with_capacity(n_samples),
        residuals: Vec::with_capacity(n_samples),
        truncated: None,
    };
    let params: Vec<f64> = if n_samples == 1 {
        vec![a]
    } else {
        (0..n_samples)
            .map(|j| a + (b - a) * j as f64 / (n_samples - 1) as f64)
            .collect()
    };
    let mut current = z0.clone();
    let mut s_cur = 0.0;
    for s in params {
        let next = if s == s_cur {
            Ok(current.clone())
        } else {
            flow(&gen, &current, s - s_cur, opts)
        };
        match next {
            Ok(z) => {
                let res = constraint_residual(sys, &z)?;
                current = z.clone();
                s_cur = s;
                trace.samples.push((s, z));
                trace.residuals.push(res);
            }
            Err(e @ (GaugeError::BranchViolation(_) | GaugeError::StepFailure { .. })) => {
                debug!("orbit truncated at s = {s_cur}: {e}");
                trace.truncated = Some(e);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(trace)
}
