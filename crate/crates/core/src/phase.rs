//! Phase-space geometry kernel.
//!
//! Coordinates are stored in a fixed layout `(q…, p…, x…, y…)`: the true
//! pairs first, then the gauge pairs. The Poisson tensor is never
//! materialised; brackets are assembled from gradients by walking the
//! canonical pairs of a [`CoordinateSplit`].
//!
//! The bracket convention is `{p_a, q^b} = δ_a^b`, so that the flow generated
//! by `h` reads `dq/ds = {h, q} = ∂h/∂p` and `dp/ds = {h, p} = -∂h/∂q`.

use std::collections::HashSet;
use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use crate::error::{GaugeError, Result};
use crate::gauge::{GaugeCondition, GaugeFrame, SolvedConstraint};

/// Partition of the canonical pairs into true pairs `(q, p)` and gauge pairs
/// `(x, y)`, with a label per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateSplit {
    n_true: usize,
    n_gauge: usize,
    labels: Vec<String>,
}

impl CoordinateSplit {
    /// Builds a split. `labels` must list the coordinates in layout order and
    /// be unique.
    pub fn new(n_true: usize, n_gauge: usize, labels: Vec<String>) -> Result<Self> {
        let dim = 2 * (n_true + n_gauge);
        if labels.len() != dim {
            return Err(GaugeError::Dimension(format!(
                "split with {n_true} true and {n_gauge} gauge pairs needs {dim} labels, got {}",
                labels.len()
            )));
        }
        let mut seen = HashSet::with_capacity(dim);
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(GaugeError::InvalidArgument(format!(
                    "duplicate coordinate label `{label}`"
                )));
            }
        }
        Ok(Self {
            n_true,
            n_gauge,
            labels,
        })
    }

    /// Split with generated labels `q0…, p0…, x0…, y0…`.
    pub fn with_default_labels(n_true: usize, n_gauge: usize) -> Self {
        let mut labels = Vec::with_capacity(2 * (n_true + n_gauge));
        for (prefix, count) in [("q", n_true), ("p", n_true), ("x", n_gauge), ("y", n_gauge)] {
            labels.extend((0..count).map(|i| format!("{prefix}{i}")));
        }
        Self {
            n_true,
            n_gauge,
            labels,
        }
    }

    pub fn n_true(&self) -> usize {
        self.n_true
    }

    pub fn n_gauge(&self) -> usize {
        self.n_gauge
    }

    pub fn n_pairs(&self) -> usize {
        self.n_true + self.n_gauge
    }

    pub fn dim(&self) -> usize {
        2 * self.n_pairs()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn q(&self, a: usize) -> usize {
        debug_assert!(a < self.n_true);
        a
    }

    pub fn p(&self, a: usize) -> usize {
        debug_assert!(a < self.n_true);
        self.n_true + a
    }

    pub fn x(&self, i: usize) -> usize {
        debug_assert!(i < self.n_gauge);
        2 * self.n_true + i
    }

    pub fn y(&self, i: usize) -> usize {
        debug_assert!(i < self.n_gauge);
        2 * self.n_true + self.n_gauge + i
    }

    /// `(position index, momentum index)` of canonical pair `k`; true pairs
    /// come first.
    pub fn pair(&self, k: usize) -> (usize, usize) {
        if k < self.n_true {
            (self.q(k), self.p(k))
        } else {
            let i = k - self.n_true;
            (self.x(i), self.y(i))
        }
    }

    /// Index of the coordinate with the given label.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Split of the true sector alone: `(q…, p…)` with no gauge pairs.
    pub fn true_sector(&self) -> CoordinateSplit {
        let mut labels = self.labels[..self.n_true].to_vec();
        labels.extend_from_slice(&self.labels[self.n_true..2 * self.n_true]);
        CoordinateSplit {
            n_true: self.n_true,
            n_gauge: 0,
            labels,
        }
    }

    /// Hamiltonian vector field `z_i ↦ {G, z_i}` from the gradient of `G`.
    pub fn hamiltonian_vector(&self, grad: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; grad.len()];
        self.hamiltonian_vector_into(grad, &mut out);
        out
    }

    pub fn hamiltonian_vector_into(&self, grad: &[f64], out: &mut [f64]) {
        for k in 0..self.n_pairs() {
            let (pos, mom) = self.pair(k);
            out[pos] = grad[mom];
            out[mom] = -grad[pos];
        }
    }

    /// `{f, g}` from the two gradients.
    pub fn bracket_from_gradients(&self, df: &[f64], dg: &[f64]) -> f64 {
        (0..self.n_pairs())
            .map(|k| {
                let (pos, mom) = self.pair(k);
                df[mom] * dg[pos] - df[pos] * dg[mom]
            })
            .sum()
    }
}

/// A point of the kinematical phase space, tied to its coordinate split.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    split: Arc<CoordinateSplit>,
    coords: Vec<f64>,
}

impl PhasePoint {
    pub fn new(split: Arc<CoordinateSplit>, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != split.dim() {
            return Err(GaugeError::Dimension(format!(
                "phase point needs {} coordinates, got {}",
                split.dim(),
                coords.len()
            )));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(GaugeError::NonFiniteEvaluation {
                label: split.labels()[i].clone(),
            });
        }
        Ok(Self { split, coords })
    }

    pub fn split(&self) -> &Arc<CoordinateSplit> {
        &self.split
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// Same split, new coordinates.
    pub fn with_coords(&self, coords: Vec<f64>) -> Result<Self> {
        Self::new(self.split.clone(), coords)
    }

    /// The true-sector values `(q…, p…)`.
    pub fn true_values(&self) -> &[f64] {
        &self.coords[..2 * self.split.n_true()]
    }
}

impl Deref for PhasePoint {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.coords
    }
}

/// A real-valued phase-space function.
pub trait ScalarField: Send + Sync {
    fn label(&self) -> String;

    fn eval(&self, z: &[f64]) -> Result<f64>;

    /// Analytic gradient, when the field knows one.
    fn analytic_grad(&self, _z: &[f64]) -> Option<Result<Vec<f64>>> {
        None
    }

    /// Preferred finite-difference base step for fields whose evaluation is
    /// itself approximate (for example, fields computed through a flow).
    fn fd_step_hint(&self) -> Option<f64> {
        None
    }
}

impl fmt::Debug for dyn ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarField({})", self.label())
    }
}

/// Default relative step for central differences: cube root of the machine
/// epsilon.
pub fn default_fd_step() -> f64 {
    f64::EPSILON.cbrt()
}

fn checked_eval(f: &dyn ScalarField, z: &[f64]) -> Result<f64> {
    let v = f.eval(z)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(GaugeError::NonFiniteEvaluation { label: f.label() })
    }
}

/// Gradient of `f` at `z`.
///
/// Returns the analytic gradient unchanged when the field supplies one.
/// Otherwise uses central differences with step `step·max(1, |z_i|)` and one
/// level of Richardson extrapolation.
pub fn gradient(f: &dyn ScalarField, z: &[f64], step: Option<f64>) -> Result<Vec<f64>> {
    if let Some(g) = f.analytic_grad(z) {
        return g;
    }
    let base = step.or_else(|| f.fd_step_hint()).unwrap_or_else(default_fd_step);
    if !(base > 0.0) {
        return Err(GaugeError::InvalidArgument(format!(
            "finite-difference step must be positive, got {base}"
        )));
    }
    let mut probe = z.to_vec();
    let mut out = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        let h = base * z[i].abs().max(1.0);
        let mut central = |h: f64| -> Result<f64> {
            probe[i] = z[i] + h;
            let plus = checked_eval(f, &probe)?;
            probe[i] = z[i] - h;
            let minus = checked_eval(f, &probe)?;
            probe[i] = z[i];
            Ok((plus - minus) / (2.0 * h))
        };
        let coarse = central(h)?;
        let fine = central(0.5 * h)?;
        out.push((4.0 * fine - coarse) / 3.0);
    }
    Ok(out)
}

/// Poisson bracket `{f, g}(z)` under the layout of `z`.
pub fn poisson_bracket(f: &dyn ScalarField, g: &dyn ScalarField, z: &PhasePoint) -> Result<f64> {
    let df = gradient(f, z, None)?;
    let dg = gradient(g, z, None)?;
    Ok(z.split().bracket_from_gradients(&df, &dg))
}

/// Poisson bracket for callers that hold a bare coordinate slice.
pub fn poisson_bracket_in(
    split: &CoordinateSplit,
    f: &dyn ScalarField,
    g: &dyn ScalarField,
    z: &[f64],
) -> Result<f64> {
    let df = gradient(f, z, None)?;
    let dg = gradient(g, z, None)?;
    Ok(split.bracket_from_gradients(&df, &dg))
}

/// Dirac bracket subordinate to the solved constraints `C̄_I` and the gauge
/// conditions `G^I(t) = x^I - k^I(t)` of `frame`:
///
/// `{f, g}* = {f, g} + {f, C̄_I}{G^I, g} - {g, C̄_I}{G^I, f}`.
///
/// The gradient of `G^I` does not involve `t`, so neither does the result.
pub fn dirac_bracket(
    f: &dyn ScalarField,
    g: &dyn ScalarField,
    frame: &GaugeFrame,
    t: f64,
    z: &PhasePoint,
) -> Result<f64> {
    let split = z.split();
    let df = gradient(f, z, None)?;
    let dg = gradient(g, z, None)?;
    let mut out = split.bracket_from_gradients(&df, &dg);
    let sys = frame.constraints();
    for i in 0..sys.n_constraints() {
        let dc = gradient(&SolvedConstraint::new(sys, i), z, None)?;
        let dgi = gradient(&GaugeCondition::new(frame, i, t), z, None)?;
        let f_c = split.bracket_from_gradients(&df, &dc);
        let g_c = split.bracket_from_gradients(&dg, &dc);
        out += f_c * split.bracket_from_gradients(&dgi, &dg)
            - g_c * split.bracket_from_gradients(&dgi, &df);
    }
    Ok(out)
}

/// The coordinate function `z ↦ z[index]`.
#[derive(Debug, Clone)]
pub struct CoordinateFunction {
    index: usize,
    label: String,
}

impl CoordinateFunction {
    pub fn new(split: &CoordinateSplit, index: usize) -> Self {
        Self {
            index,
            label: split.labels()[index].clone(),
        }
    }

    pub fn by_label(split: &CoordinateSplit, label: &str) -> Result<Self> {
        split
            .index_of(label)
            .map(|i| Self::new(split, i))
            .ok_or_else(|| GaugeError::InvalidArgument(format!("unknown coordinate `{label}`")))
    }

    pub fn index(&self) -> usize {
        self.index
    }
}

impl ScalarField for CoordinateFunction {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn eval(&self, z: &[f64]) -> Result<f64> {
        Ok(z[self.index])
    }

    fn analytic_grad(&self, z: &[f64]) -> Option<Result<Vec<f64>>> {
        let mut g = vec![0.0; z.len()];
        g[self.index] = 1.0;
        Some(Ok(g))
    }
}

type EvalFn = dyn Fn(&[f64]) -> Result<f64> + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync;

/// A field built from closures.
pub struct FnField {
    label: String,
    eval: Box<EvalFn>,
    grad: Option<Box<GradFn>>,
}

impl FnField {
    pub fn new(
        label: impl Into<String>,
        eval: impl Fn(&[f64]) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            eval: Box::new(eval),
            grad: None,
        }
    }

    pub fn with_grad(
        mut self,
        grad: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.grad = Some(Box::new(grad));
        self
    }
}

impl ScalarField for FnField {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn eval(&self, z: &[f64]) -> Result<f64> {
        (self.eval)(z)
    }

    fn analytic_grad(&self, z: &[f64]) -> Option<Result<Vec<f64>>> {
        self.grad.as_ref().map(|g| g(z))
    }
}

/// Pointwise product of two fields.
pub struct ProductField {
    left: Arc<dyn ScalarField>,
    right: Arc<dyn ScalarField>,
}

impl ProductField {
    pub fn new(left: Arc<dyn ScalarField>, right: Arc<dyn ScalarField>) -> Self {
        Self { left, right }
    }
}

impl ScalarField for ProductField {
    fn label(&self) -> String {
        format!("({})*({})", self.left.label(), self.right.label())
    }

    fn eval(&self, z: &[f64]) -> Result<f64> {
        Ok(self.left.eval(z)? * self.right.eval(z)?)
    }
}

/// The constant function.
#[derive(Debug, Clone, Copy)]
pub struct ConstantField(pub f64);

impl ScalarField for ConstantField {
    fn label(&self) -> String {
        format!("{}", self.0)
    }

    fn eval(&self, _z: &[f64]) -> Result<f64> {
        Ok(self.0)
    }

    fn analytic_grad(&self, z: &[f64]) -> Option<Result<Vec<f64>>> {
        Some(Ok(vec![0.0; z.len()]))
    }
}
