//! Constraint sets, branch selection, gauge clocks and frames.
//!
//! A [`ConstraintSystem`] exposes the secondary constraints of one coordinate
//! split in two forms: the raw constraints `C_I(q, p, x, y)` and the solved
//! ones `C̄_I = y_I + h_I(x; q, p)`, valid on one branch. A [`GaugeFrame`]
//! pairs a constraint system with one clock `k^I(t)` per reference field,
//! which fixes the family of gauge cuts `x^I = k^I(t)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GaugeError, Result};
use crate::phase::{gradient, CoordinateSplit, PhasePoint, ScalarField};

/// Sign of one momentum root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+", alias = "plus")]
    Positive,
    #[serde(rename = "-", alias = "minus")]
    Negative,
}

impl Sign {
    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }

    pub fn admits(self, value: f64, tol: f64) -> bool {
        match self {
            Sign::Positive => value >= -tol,
            Sign::Negative => value <= tol,
        }
    }
}

/// One sign per constraint selecting the root `y_I = -h_I^{σ_I}`; `None`
/// marks a constraint whose solved form is unique.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchSigns {
    signs: Vec<Option<Sign>>,
}

impl BranchSigns {
    pub fn new(signs: Vec<Option<Sign>>) -> Self {
        Self { signs }
    }

    pub fn uniform(sign: Sign, n: usize) -> Self {
        Self {
            signs: vec![Some(sign); n],
        }
    }

    pub fn single(n: usize) -> Self {
        Self {
            signs: vec![None; n],
        }
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn sign(&self, i: usize) -> Option<Sign> {
        self.signs[i]
    }
}

/// Absolute tolerance used by square-root radicand guards, relative to the
/// magnitude of the terms entering the radicand.
pub const RADICAND_TOL: f64 = 1e-12;

/// Square root of a radicand that may graze zero.
///
/// Radicands below `-RADICAND_TOL·max(1, scale)` leave the branch; smaller
/// negative values are clamped to zero.
pub fn guarded_sqrt(radicand: f64, scale: f64, what: &str) -> Result<f64> {
    if !radicand.is_finite() {
        return Err(GaugeError::NonFiniteEvaluation {
            label: what.to_string(),
        });
    }
    let tol = RADICAND_TOL * scale.abs().max(1.0);
    if radicand < -tol {
        Err(GaugeError::BranchViolation(format!(
            "{what}: radicand {radicand:e} is negative"
        )))
    } else {
        Ok(radicand.max(0.0).sqrt())
    }
}

/// Secondary constraints of one coordinate split.
pub trait ConstraintSystem: Send + Sync {
    fn split(&self) -> &Arc<CoordinateSplit>;

    fn branch(&self) -> &BranchSigns;

    fn n_constraints(&self) -> usize {
        self.split().n_gauge()
    }

    /// The solved function `h_I(x; q, p)`. Must not depend on `y`.
    fn h(&self, index: usize, z: &[f64]) -> Result<f64>;

    fn h_grad(&self, _index: usize, _z: &[f64]) -> Option<Result<Vec<f64>>> {
        None
    }

    /// The raw constraint `C_I(q, p, x, y)`.
    fn raw(&self, index: usize, z: &[f64]) -> Result<f64>;

    fn raw_grad(&self, _index: usize, _z: &[f64]) -> Option<Result<Vec<f64>>> {
        None
    }

    /// Gradient of `Σ_I g^I C̄_I`. Systems with many constraints override
    /// this with an assembled expression.
    fn generator_grad(&self, g: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let split = self.split();
        let mut out = vec![0.0; z.len()];
        for (i, &gi) in g.iter().enumerate() {
            if gi == 0.0 {
                continue;
            }
            let dh = h_gradient(self, i, z)?;
            for (o, d) in out.iter_mut().zip(&dh) {
                *o += gi * d;
            }
            out[split.y(i)] += gi;
        }
        Ok(out)
    }

    /// Branch membership of a point with solved momenta. The default checks
    /// the sign of every `y_I` against [`BranchSigns`].
    fn check_branch(&self, z: &[f64]) -> Result<()> {
        let split = self.split();
        for i in 0..self.n_constraints() {
            if let Some(sign) = self.branch().sign(i) {
                let y = z[split.y(i)];
                if !sign.admits(y, 1e-12) {
                    return Err(GaugeError::BranchViolation(format!(
                        "momentum `{}` = {y} has the wrong sign for the selected branch",
                        split.labels()[split.y(i)]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Range check on true-sector values `(q…, p…)`.
    fn check_true_domain(&self, _qp: &[f64]) -> Result<()> {
        Ok(())
    }
}

impl fmt::Debug for dyn ConstraintSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ConstraintSystem({:?})", self.split().labels())
    }
}

/// Gradient of `h_I`, analytic when available.
pub fn h_gradient<S: ConstraintSystem + ?Sized>(sys: &S, index: usize, z: &[f64]) -> Result<Vec<f64>> {
    if let Some(g) = sys.h_grad(index, z) {
        return g;
    }
    struct HField<'a, S: ?Sized> {
        sys: &'a S,
        index: usize,
    }
    impl<S: ConstraintSystem + ?Sized> ScalarField for HField<'_, S> {
        fn label(&self) -> String {
            format!("h{}", self.index)
        }
        fn eval(&self, z: &[f64]) -> Result<f64> {
            self.sys.h(self.index, z)
        }
    }
    let mut g = gradient(&HField { sys, index }, z, None)?;
    g[sys.split().y(index)] = 0.0;
    Ok(g)
}

fn raw_gradient(sys: &dyn ConstraintSystem, index: usize, z: &[f64]) -> Result<Vec<f64>> {
    if let Some(g) = sys.raw_grad(index, z) {
        return g;
    }
    gradient(&RawConstraint::new(sys, index), z, None)
}

/// `C̄_I = y_I + h_I` as a scalar field.
pub struct SolvedConstraint<'a> {
    sys: &'a dyn ConstraintSystem,
    index: usize,
}

impl<'a> SolvedConstraint<'a> {
    pub fn new(sys: &'a dyn ConstraintSystem, index: usize) -> Self {
        Self { sys, index }
    }
}

impl ScalarField for SolvedConstraint<'_> {
    fn label(&self) -> String {
        format!("Cbar{}", self.index)
    }

    fn eval(&self, z: &[f64]) -> Result<f64> {
        Ok(z[self.sys.split().y(self.index)] + self.sys.h(self.index, z)?)
    }

    fn analytic_grad(&self, z: &[f64]) -> Option<Result<Vec<f64>>> {
        Some(h_gradient(self.sys, self.index, z).map(|mut g| {
            g[self.sys.split().y(self.index)] += 1.0;
            g
        }))
    }
}

/// The raw constraint `C_I` as a scalar field.
pub struct RawConstraint<'a> {
    sys: &'a dyn ConstraintSystem,
    index: usize,
}

impl<'a> RawConstraint<'a> {
    pub fn new(sys: &'a dyn ConstraintSystem, index: usize) -> Self {
        Self { sys, index }
    }
}

impl ScalarField for RawConstraint<'_> {
    fn label(&self) -> String {
        format!("C{}", self.index)
    }

    fn eval(&self, z: &[f64]) -> Result<f64> {
        self.sys.raw(self.index, z)
    }

    fn analytic_grad(&self, z: &[f64]) -> Option<Result<Vec<f64>>> {
        self.sys.raw_grad(self.index, z)
    }
}

/// `max_I |C̄_I(z)|`.
pub fn constraint_residual(sys: &dyn ConstraintSystem, z: &[f64]) -> Result<f64> {
    let split = sys.split();
    let mut worst: f64 = 0.0;
    for i in 0..sys.n_constraints() {
        let c = z[split.y(i)] + sys.h(i, z)?;
        if !c.is_finite() {
            return Err(GaugeError::NonFiniteEvaluation {
                label: format!("Cbar{i}"),
            });
        }
        worst = worst.max(c.abs());
    }
    Ok(worst)
}

/// `max_I |C_I(z)|` for the raw constraints.
pub fn raw_residual(sys: &dyn ConstraintSystem, z: &[f64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..sys.n_constraints() {
        let c = sys.raw(i, z)?;
        if !c.is_finite() {
            return Err(GaugeError::NonFiniteEvaluation {
                label: format!("C{i}"),
            });
        }
        worst = worst.max(c.abs());
    }
    Ok(worst)
}

/// Options for [`solve_for_momenta`].
#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-12,
        }
    }
}

/// Solves the raw constraints `C_I(q, p, x, y) = 0` for the gauge momenta `y`
/// by Newton iteration, starting from `guess`. Entries of `z_partial` in the
/// `y` slots are ignored.
///
/// Convergence is declared when `max_I |C_I| ≤ tol·max(1, max_I y_I²)`. The
/// converged root is then checked against `branch`.
pub fn solve_for_momenta(
    sys: &dyn ConstraintSystem,
    z_partial: &[f64],
    branch: &BranchSigns,
    guess: &[f64],
    opts: NewtonOptions,
) -> Result<Vec<f64>> {
    let split = sys.split();
    let n = sys.n_constraints();
    if guess.len() != n || z_partial.len() != split.dim() || branch.len() != n {
        return Err(GaugeError::Dimension(format!(
            "momentum solve expects {n} constraints on a {}-dimensional point",
            split.dim()
        )));
    }
    let mut z = z_partial.to_vec();
    for (i, g) in guess.iter().enumerate() {
        z[split.y(i)] = *g;
    }
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iterations {
        let c: Vec<f64> = (0..n).map(|i| sys.raw(i, &z)).collect::<Result<_>>()?;
        residual = c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if !residual.is_finite() {
            return Err(GaugeError::NonFiniteEvaluation {
                label: "raw constraints".into(),
            });
        }
        let y_scale = (0..n).fold(1.0_f64, |m, i| m.max(z[split.y(i)].powi(2)));
        if residual <= opts.tolerance * y_scale {
            let y: Vec<f64> = (0..n).map(|i| z[split.y(i)]).collect();
            for (i, &yi) in y.iter().enumerate() {
                if let Some(sign) = branch.sign(i) {
                    if !sign.admits(yi, opts.tolerance.sqrt()) {
                        return Err(GaugeError::BranchViolation(format!(
                            "root {yi} for `{}` lies on the other branch",
                            split.labels()[split.y(i)]
                        )));
                    }
                }
            }
            sys.check_branch(&z)?;
            return Ok(y);
        }
        let mut jac = DMatrix::zeros(n, n);
        for i in 0..n {
            let g = raw_gradient(sys, i, &z)?;
            for j in 0..n {
                jac[(i, j)] = g[split.y(j)];
            }
        }
        let rhs = DVector::from_iterator(n, c.iter().map(|v| -v));
        let step = jac.lu().solve(&rhs).ok_or(GaugeError::NoConvergence {
            iterations: 0,
            residual,
        })?;
        for j in 0..n {
            z[split.y(j)] += step[j];
        }
    }
    Err(GaugeError::NoConvergence {
        iterations: opts.max_iterations,
        residual,
    })
}

/// One gauge clock `k(t)` with its exact rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GaugeClock {
    /// `k(t) = offset + rate·t`.
    Linear { offset: f64, rate: f64 },
    /// `k(t) = Σ_n c_n t^n`.
    Polynomial { coefficients: Vec<f64> },
}

impl GaugeClock {
    pub fn linear(offset: f64, rate: f64) -> Self {
        GaugeClock::Linear { offset, rate }
    }

    pub fn constant(value: f64) -> Self {
        GaugeClock::Linear {
            offset: value,
            rate: 0.0,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            GaugeClock::Linear { offset, rate } => offset + rate * t,
            GaugeClock::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c)
            }
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        match self {
            GaugeClock::Linear { rate, .. } => *rate,
            GaugeClock::Polynomial { coefficients } => coefficients
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (n, c)| acc * t + n as f64 * c),
        }
    }

    /// True when the clock has no time dependence at all.
    pub fn is_constant(&self) -> bool {
        match self {
            GaugeClock::Linear { rate, .. } => *rate == 0.0,
            GaugeClock::Polynomial { coefficients } => coefficients.iter().skip(1).all(|c| *c == 0.0),
        }
    }
}

/// A coordinate split with its solved constraints, before clocks are chosen.
pub struct FrameTemplate {
    pub name: String,
    /// Labels of the reference fields `x^I`.
    pub reference_labels: Vec<String>,
    pub constraints: Arc<dyn ConstraintSystem>,
    /// Kinematical slot of every frame slot, in frame layout order.
    pub kinematic_index: Vec<usize>,
}

impl fmt::Debug for FrameTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrameTemplate")
            .field("name", &self.name)
            .field("reference_labels", &self.reference_labels)
            .finish()
    }
}

/// A relational reference frame: reference fields plus clocks `k^I(t)`.
#[derive(Debug, Clone)]
pub struct GaugeFrame {
    template: Arc<FrameTemplate>,
    clocks: Vec<GaugeClock>,
}

impl GaugeFrame {
    /// Requires one clock per constraint, at least one of them non-constant.
    pub fn new(template: Arc<FrameTemplate>, clocks: Vec<GaugeClock>) -> Result<Self> {
        let n = template.constraints.n_constraints();
        if clocks.len() != n {
            return Err(GaugeError::Dimension(format!(
                "frame `{}` needs {n} clocks, got {}",
                template.name,
                clocks.len()
            )));
        }
        if clocks.iter().all(GaugeClock::is_constant) {
            return Err(GaugeError::InvalidArgument(format!(
                "frame `{}`: at least one clock must have a non-zero rate",
                template.name
            )));
        }
        Ok(Self { template, clocks })
    }

    /// A frame whose clocks may all be constant. Used for fixed cuts, such
    /// as the target of a single reference frame transformation.
    pub fn fixed_cut(template: Arc<FrameTemplate>, clocks: Vec<GaugeClock>) -> Result<Self> {
        let n = template.constraints.n_constraints();
        if clocks.len() != n {
            return Err(GaugeError::Dimension(format!(
                "frame `{}` needs {n} clocks, got {}",
                template.name,
                clocks.len()
            )));
        }
        Ok(Self { template, clocks })
    }

    pub fn name(&self) -> &str {
        &self.template.name
    }

    pub fn template(&self) -> &Arc<FrameTemplate> {
        &self.template
    }

    pub fn constraints(&self) -> &dyn ConstraintSystem {
        self.template.constraints.as_ref()
    }

    pub fn split(&self) -> &Arc<CoordinateSplit> {
        self.template.constraints.split()
    }

    pub fn clocks(&self) -> &[GaugeClock] {
        &self.clocks
    }

    pub fn with_clocks(&self, clocks: Vec<GaugeClock>) -> Result<Self> {
        Self::new(self.template.clone(), clocks)
    }

    pub fn k(&self, t: f64) -> Vec<f64> {
        self.clocks.iter().map(|c| c.value(t)).collect()
    }

    pub fn k_rate(&self, t: f64) -> Vec<f64> {
        self.clocks.iter().map(|c| c.rate(t)).collect()
    }

    /// Index of the first non-constant clock.
    pub fn active_index(&self) -> usize {
        self.clocks.iter().position(|c| !c.is_constant()).unwrap_or(0)
    }

    /// Places true-sector values on the cut at `t`: `x = k(t)`, `y = -h`.
    pub fn embed(&self, t: f64, qp: &[f64]) -> Result<PhasePoint> {
        let split = self.split();
        let n_true = split.n_true();
        if qp.len() != 2 * n_true {
            return Err(GaugeError::Dimension(format!(
                "frame `{}` has {} true coordinates, got {}",
                self.name(),
                2 * n_true,
                qp.len()
            )));
        }
        self.constraints().check_true_domain(qp)?;
        let mut z = vec![0.0; split.dim()];
        z[..2 * n_true].copy_from_slice(qp);
        for (i, k) in self.k(t).into_iter().enumerate() {
            z[split.x(i)] = k;
        }
        let sys = self.constraints();
        let h: Vec<f64> = (0..split.n_gauge()).map(|i| sys.h(i, &z)).collect::<Result<_>>()?;
        for (i, hi) in h.into_iter().enumerate() {
            z[split.y(i)] = -hi;
        }
        PhasePoint::new(split.clone(), z)
    }

    /// Completes a point by solving the momenta: `y = -h(x; q, p)`.
    pub fn complete(&self, z_partial: &[f64]) -> Result<PhasePoint> {
        let split = self.split();
        let sys = self.constraints();
        let mut z = z_partial.to_vec();
        let h: Vec<f64> = (0..split.n_gauge()).map(|i| sys.h(i, &z)).collect::<Result<_>>()?;
        for (i, hi) in h.into_iter().enumerate() {
            z[split.y(i)] = -hi;
        }
        PhasePoint::new(split.clone(), z)
    }

    /// The true-sector values of a point.
    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        z[..2 * self.split().n_true()].to_vec()
    }

    /// Frame layout → kinematical layout.
    pub fn to_kinematic(&self, z: &[f64]) -> Vec<f64> {
        let mut kin = vec![0.0; z.len()];
        for (slot, &k) in self.template.kinematic_index.iter().enumerate() {
            kin[k] = z[slot];
        }
        kin
    }

    /// Kinematical layout → frame layout.
    pub fn from_kinematic(&self, kin: &[f64]) -> Vec<f64> {
        self.template.kinematic_index.iter().map(|&k| kin[k]).collect()
    }
}

/// `G^I(t) = x^I - k^I(t)` as a scalar field.
pub struct GaugeCondition {
    index: usize,
    slot: usize,
    value: f64,
}

impl GaugeCondition {
    pub fn new(frame: &GaugeFrame, index: usize, t: f64) -> Self {
        Self {
            index,
            slot: frame.split().x(index),
            value: frame.clocks()[index].value(t),
        }
    }
}

impl ScalarField for GaugeCondition {
    fn label(&self) -> String {
        format!("G{}", self.index)
    }

    fn eval(&self, z: &[f64]) -> Result<f64> {
        Ok(z[self.slot] - self.value)
    }

    fn analytic_grad(&self, z: &[f64]) -> Option<Result<Vec<f64>>> {
        let mut g = vec![0.0; z.len()];
        g[self.slot] = 1.0;
        Some(Ok(g))
    }
}

/// Component-wise `x^I(z) - k^I(t)`.
pub fn gauge_residual(frame: &GaugeFrame, t: f64, z: &[f64]) -> Vec<f64> {
    let split = frame.split();
    frame
        .k(t)
        .into_iter()
        .enumerate()
        .map(|(i, k)| z[split.x(i)] - k)
        .collect()
}

/// Solution of the stability condition `Δ X = k̇` with `Δ^I_J = {C_J, x^I}`.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityResult {
    pub x_star: Vec<f64>,
    /// `Δ^I_J`, row `I`, column `J`.
    pub matrix: DMatrix<f64>,
    pub condition: f64,
}

/// Largest condition number of `Δ` accepted before the cut is declared
/// non-transversal.
pub const MAX_TRANSVERSALITY_CONDITION: f64 = 1e12;

/// Lapse/shift multipliers preserving the cut at `t`.
///
/// With the solved constraints `Δ` is the identity and `X* = k̇` exactly;
/// with the raw constraints `Δ` is assembled from the raw gradients.
pub fn stability_multipliers(
    frame: &GaugeFrame,
    t: f64,
    z: &[f64],
    use_raw: bool,
) -> Result<StabilityResult> {
    let split = frame.split();
    let sys = frame.constraints();
    let n = sys.n_constraints();
    let mut delta = DMatrix::zeros(n, n);
    if use_raw {
        for j in 0..n {
            let g = raw_gradient(sys, j, z)?;
            for i in 0..n {
                // {C_J, x^I} = ∂C_J/∂y_I
                delta[(i, j)] = g[split.y(i)];
            }
        }
    } else {
        for i in 0..n {
            delta[(i, i)] = 1.0;
        }
    }
    let sv = delta.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_TRANSVERSALITY_CONDITION) {
        return Err(GaugeError::SingularTransversality { condition });
    }
    let rates = DVector::from_vec(frame.k_rate(t));
    let x = delta
        .clone()
        .lu()
        .solve(&rates)
        .ok_or(GaugeError::SingularTransversality { condition })?;
    Ok(StabilityResult {
        x_star: x.iter().copied().collect(),
        matrix: delta,
        condition,
    })
}
