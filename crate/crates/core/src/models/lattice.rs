//! Parametrised scalar field theory on a spatial lattice, `D ∈ {1, 2}`.
//!
//! Every site carries the field `φ`, its canonical lattice momentum
//! `Π = dz^D π`, the embedding `x^A` and its momentum `Y_A = dz^D y_A`.
//! Canonical lattice momenta make the site brackets reproduce continuum
//! functional brackets, `{π(z_i), φ(z_j)} = δ_ij / dz^D`. The constraints are
//!
//! `C̄_{A,i} = Y_{A,i} + dz^D h_A(i)`,
//! `h_A = n_A Z + q^{ab} η_{AB} x^B_{,a} Z_b`,
//! `Z_b = π φ_{,b}`, `Z = ½(π²/det q + q^{ab} φ_{,a} φ_{,b} + V(φ))`,
//!
//! with `V = ½ μ² φ²`. Field derivatives are central differences with zero
//! padding outside the lattice; embedding derivatives are central inside and
//! one-sided second order at the edges. Sites sit at
//! `z_i = (i - (N - 1)/2) dz` along every axis.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ModelSystem;
use crate::error::{GaugeError, Result};
use crate::flow::{hamiltonian_flow, FlowOptions};
use crate::gauge::{BranchSigns, ConstraintSystem, FrameTemplate, GaugeClock, GaugeFrame};
use crate::phase::{CoordinateSplit, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticePftParams {
    pub d: usize,
    pub n: usize,
    pub dz: f64,
    #[serde(default)]
    pub mu: f64,
}

impl Default for LatticePftParams {
    fn default() -> Self {
        Self {
            d: 1,
            n: 128,
            dz: 0.1,
            mu: 0.0,
        }
    }
}

/// Width of the boundary band, in sites, watched for support escape.
pub const GUARD_BAND: usize = 8;

/// Field magnitude in the guard band, relative to the peak, above which a
/// configuration counts as touching the boundary.
pub const SUPPORT_TOL: f64 = 1e-3;

/// Lattice geometry shared by constraints and generators.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub d: usize,
    pub n: usize,
    pub dz: f64,
    pub mu: f64,
}

impl Lattice {
    pub fn sites(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// `dz^D`.
    pub fn volume(&self) -> f64 {
        self.dz.powi(self.d as i32)
    }

    fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.d - 1 - axis) as u32)
    }

    /// Integer coordinate of `site` along `axis`.
    pub fn index_along(&self, site: usize, axis: usize) -> usize {
        (site / self.stride(axis)) % self.n
    }

    /// `z^a` of a site, `axis = a - 1`.
    pub fn coordinate(&self, site: usize, axis: usize) -> f64 {
        (self.index_along(site, axis) as f64 - (self.n as f64 - 1.0) / 2.0) * self.dz
    }

    /// Central difference with zero values outside the lattice.
    pub fn diff_dirichlet(&self, u: &[f64], site: usize, axis: usize) -> f64 {
        let c = self.index_along(site, axis);
        let s = self.stride(axis);
        let up = if c + 1 < self.n { u[site + s] } else { 0.0 };
        let down = if c > 0 { u[site - s] } else { 0.0 };
        (up - down) / (2.0 * self.dz)
    }

    /// Central difference inside, one-sided second order at the edges.
    pub fn diff_open(&self, u: &[f64], site: usize, axis: usize) -> f64 {
        let c = self.index_along(site, axis);
        let s = self.stride(axis);
        let h2 = 2.0 * self.dz;
        if c == 0 {
            (-3.0 * u[site] + 4.0 * u[site + s] - u[site + 2 * s]) / h2
        } else if c + 1 == self.n {
            (3.0 * u[site] - 4.0 * u[site - s] + u[site - 2 * s]) / h2
        } else {
            (u[site + s] - u[site - s]) / h2
        }
    }

    /// `D_a u` on every site.
    pub fn apply_diff(&self, u: &[f64], axis: usize) -> Vec<f64> {
        (0..u.len()).map(|i| self.diff_dirichlet(u, i, axis)).collect()
    }
}

/// Embedding geometry at one site.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteGeometry {
    /// `x^A_{,a}`, indexed `[a][A]`.
    pub dx: Vec<Vec<f64>>,
    /// Co-normal `n_A`.
    pub n: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub q_inv: Vec<Vec<f64>>,
    pub det_q: f64,
}

/// `η = diag(-1, 1, …, 1)`.
fn eta(a: usize) -> f64 {
    if a == 0 {
        -1.0
    } else {
        1.0
    }
}

fn levi_civita3(a: usize, b: usize, c: usize) -> f64 {
    match (a, b, c) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

impl Lattice {
    /// Geometry at `site` of the embedding `x` given as `x[A][site]`.
    pub fn geometry(&self, x: &[&[f64]], site: usize) -> Result<SiteGeometry> {
        let d = self.d;
        let dx: Vec<Vec<f64>> = (0..d)
            .map(|a| (0..=d).map(|big| self.diff_open(x[big], site, a)).collect())
            .collect();
        let q: Vec<Vec<f64>> = (0..d)
            .map(|a| {
                (0..d)
                    .map(|b| (0..=d).map(|big| eta(big) * dx[a][big] * dx[b][big]).sum())
                    .collect()
            })
            .collect();
        let (det_q, q_inv) = match d {
            1 => (q[0][0], vec![vec![1.0 / q[0][0]]]),
            2 => {
                let det = q[0][0] * q[1][1] - q[0][1] * q[1][0];
                (
                    det,
                    vec![vec![q[1][1] / det, -q[0][1] / det], vec![-q[1][0] / det, q[0][0] / det]],
                )
            }
            _ => unreachable!("lattice dimension is validated at construction"),
        };
        if !(det_q > 0.0) || !det_q.is_finite() {
            return Err(GaugeError::DomainViolation(format!(
                "embedding is not spacelike at site {site} (det q = {det_q})"
            )));
        }
        let n = match d {
            1 => vec![dx[0][1], -dx[0][0]],
            2 => (0..3)
                .map(|big| {
                    let mut s = 0.0;
                    for b in 0..3 {
                        for c in 0..3 {
                            s += levi_civita3(big, b, c) * dx[0][b] * dx[1][c];
                        }
                    }
                    s
                })
                .collect(),
            _ => unreachable!(),
        };
        Ok(SiteGeometry {
            dx,
            n,
            q,
            q_inv,
            det_q,
        })
    }

    /// `h_A(i)` for every `A` at one site.
    pub fn site_h(&self, phi: &[f64], big_pi: &[f64], x: &[&[f64]], site: usize) -> Result<Vec<f64>> {
        let d = self.d;
        let g = self.geometry(x, site)?;
        let pi = big_pi[site] / self.volume();
        let dphi: Vec<f64> = (0..d).map(|a| self.diff_dirichlet(phi, site, a)).collect();
        let mut grad_sq = 0.0;
        for a in 0..d {
            for b in 0..d {
                grad_sq += g.q_inv[a][b] * dphi[a] * dphi[b];
            }
        }
        let v = 0.5 * self.mu * self.mu * phi[site] * phi[site];
        let z = 0.5 * (pi * pi / g.det_q + grad_sq + v);
        let zb: Vec<f64> = dphi.iter().map(|f| pi * f).collect();
        Ok((0..=d)
            .map(|big| {
                let mut tangential = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        tangential += g.q_inv[a][b] * eta(big) * g.dx[a][big] * zb[b];
                    }
                }
                g.n[big] * z + tangential
            })
            .collect())
    }
}

/// Constraint system of the lattice; layout
/// `(φ_i…, Π_i…, x^A_i…, Y_{A,i}…)` with gauge index `A·sites + i`.
struct LatticeConstraints {
    split: Arc<CoordinateSplit>,
    branch: BranchSigns,
    lattice: Lattice,
}

impl LatticeConstraints {
    fn views<'a>(&self, z: &'a [f64]) -> (&'a [f64], &'a [f64], Vec<&'a [f64]>) {
        let ns = self.lattice.sites();
        let phi = &z[..ns];
        let pi = &z[ns..2 * ns];
        let x = (0..=self.lattice.d)
            .map(|a| &z[2 * ns + a * ns..2 * ns + (a + 1) * ns])
            .collect();
        (phi, pi, x)
    }
}

impl ConstraintSystem for LatticeConstraints {
    fn split(&self) -> &Arc<CoordinateSplit> {
        &self.split
    }

    fn branch(&self) -> &BranchSigns {
        &self.branch
    }

    fn h(&self, index: usize, z: &[f64]) -> Result<f64> {
        let ns = self.lattice.sites();
        let (big, site) = (index / ns, index % ns);
        let (phi, pi, x) = self.views(z);
        Ok(self.lattice.volume() * self.lattice.site_h(phi, pi, &x, site)?[big])
    }

    /// Linear in `Y`: the raw and solved forms coincide.
    fn raw(&self, index: usize, z: &[f64]) -> Result<f64> {
        Ok(z[self.split.y(index)] + self.h(index, z)?)
    }
}

pub const EMBEDDING_FRAME: &str = "embedding";

/// Lattice model with its generators and inertial frames.
#[derive(Debug, Clone)]
pub struct LatticePft {
    pub params: LatticePftParams,
    pub lattice: Lattice,
    pub model: ModelSystem,
    true_split: Arc<CoordinateSplit>,
}

pub fn make_lattice_pft(params: LatticePftParams) -> Result<LatticePft> {
    let LatticePftParams { d, n, dz, mu } = params;
    if !(d == 1 || d == 2) {
        return Err(GaugeError::InvalidArgument(format!("lattice dimension must be 1 or 2, got {d}")));
    }
    if n < 2 * GUARD_BAND + 3 {
        return Err(GaugeError::InvalidArgument(format!(
            "lattice needs at least {} sites per axis, got {n}",
            2 * GUARD_BAND + 3
        )));
    }
    if !(dz > 0.0) || !dz.is_finite() || !(mu >= 0.0) || !mu.is_finite() {
        return Err(GaugeError::InvalidArgument(format!(
            "lattice needs dz > 0 and mu ≥ 0, got dz = {dz}, mu = {mu}"
        )));
    }
    let lattice = Lattice { d, n, dz, mu };
    let ns = lattice.sites();
    let mut labels: Vec<String> = Vec::with_capacity(2 * ns * (d + 2));
    labels.extend((0..ns).map(|i| format!("phi[{i}]")));
    labels.extend((0..ns).map(|i| format!("Pi[{i}]")));
    let true_split = Arc::new(CoordinateSplit::new(ns, 0, labels.clone())?);
    for a in 0..=d {
        labels.extend((0..ns).map(|i| format!("x{a}[{i}]")));
    }
    for a in 0..=d {
        labels.extend((0..ns).map(|i| format!("Y{a}[{i}]")));
    }
    let n_gauge = (d + 1) * ns;
    let split = Arc::new(CoordinateSplit::new(ns, n_gauge, labels.clone())?);
    let constraints = LatticeConstraints {
        split,
        branch: BranchSigns::single(n_gauge),
        lattice: lattice.clone(),
    };
    let template = Arc::new(FrameTemplate {
        name: EMBEDDING_FRAME.into(),
        reference_labels: (0..=d).map(|a| format!("x{a}")).collect(),
        constraints: Arc::new(constraints),
        kinematic_index: (0..labels.len()).collect(),
    });
    Ok(LatticePft {
        params,
        lattice,
        model: ModelSystem::new("lattice_pft", labels, vec![template]),
        true_split,
    })
}

/// Square matrix stored row-major, `L^A_μ` at `[A][μ]`.
pub type Lorentz = Vec<Vec<f64>>;

impl LatticePft {
    pub fn sites(&self) -> usize {
        self.lattice.sites()
    }

    /// Split of the field sector `(φ…, Π…)`.
    pub fn true_split(&self) -> &Arc<CoordinateSplit> {
        &self.true_split
    }

    pub fn identity_lorentz(&self) -> Lorentz {
        let n = self.lattice.d + 1;
        (0..n).map(|a| (0..n).map(|b| if a == b { 1.0 } else { 0.0 }).collect()).collect()
    }

    /// Boost of rapidity `s0` along `z¹`.
    pub fn boost(&self, s0: f64) -> Lorentz {
        let mut l = self.identity_lorentz();
        l[0][0] = s0.cosh();
        l[1][1] = s0.cosh();
        l[0][1] = s0.sinh();
        l[1][0] = s0.sinh();
        l
    }

    /// Rotation by `theta` in the `(z¹, z²)` plane; `D = 2` only.
    pub fn rotation(&self, theta: f64) -> Result<Lorentz> {
        if self.lattice.d != 2 {
            return Err(GaugeError::InvalidArgument("rotations need a two-dimensional lattice".into()));
        }
        let mut l = self.identity_lorentz();
        l[1][1] = theta.cos();
        l[1][2] = -theta.sin();
        l[2][1] = theta.sin();
        l[2][2] = theta.cos();
        Ok(l)
    }

    /// Inertial frame `k^A_i(t) = L^A_0 t + L^A_a z^a_i`.
    pub fn inertial_frame(&self, l: &Lorentz) -> Result<GaugeFrame> {
        let d = self.lattice.d;
        if l.len() != d + 1 || l.iter().any(|row| row.len() != d + 1) {
            return Err(GaugeError::Dimension(format!("Lorentz matrix must be {0}×{0}", d + 1)));
        }
        let ns = self.sites();
        let mut clocks = Vec::with_capacity((d + 1) * ns);
        for row in l {
            for i in 0..ns {
                let offset: f64 = (0..d).map(|a| row[a + 1] * self.lattice.coordinate(i, a)).sum();
                clocks.push(GaugeClock::linear(offset, row[0]));
            }
        }
        self.model.frame(EMBEDDING_FRAME, clocks)
    }

    /// `max_i |η^{AB} n_A n_B + det q|` and `max_{i,a} |n_A x^A_{,a}|` for an
    /// embedding `x[A][site]`.
    pub fn embedding_identities(&self, x: &[Vec<f64>]) -> Result<(f64, f64)> {
        let views: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        let mut norm_dev: f64 = 0.0;
        let mut tangent_dev: f64 = 0.0;
        for site in 0..self.sites() {
            let g = self.lattice.geometry(&views, site)?;
            let nn: f64 = g.n.iter().enumerate().map(|(a, v)| eta(a) * v * v).sum();
            norm_dev = norm_dev.max((nn + g.det_q).abs());
            for a in 0..self.lattice.d {
                let t: f64 = g.n.iter().zip(&g.dx[a]).map(|(n, dx)| n * dx).sum();
                tangent_dev = tangent_dev.max(t.abs());
            }
        }
        Ok((norm_dev, tangent_dev))
    }

    /// Full phase-space point of a field configuration on the cut of `frame`
    /// at `t`.
    pub fn embed(&self, frame: &GaugeFrame, t: f64, fields: &[f64]) -> Result<crate::phase::PhasePoint> {
        frame.embed(t, fields)
    }

    /// Field configuration with a Gaussian profile of width `sigma` centred
    /// at `center` and `π = -∂φ/∂z¹`, a right-moving packet.
    pub fn gaussian_packet(&self, amplitude: f64, sigma: f64, center: &[f64]) -> Vec<f64> {
        let ns = self.sites();
        let d = self.lattice.d;
        let mut out = vec![0.0; 2 * ns];
        for i in 0..ns {
            let mut r2 = 0.0;
            for a in 0..d {
                let c = center.get(a).copied().unwrap_or(0.0);
                r2 += (self.lattice.coordinate(i, a) - c).powi(2);
            }
            let phi = amplitude * (-r2 / (2.0 * sigma * sigma)).exp();
            let c0 = center.first().copied().unwrap_or(0.0);
            let dphi = -(self.lattice.coordinate(i, 0) - c0) / (sigma * sigma) * phi;
            out[i] = phi;
            out[ns + i] = -dphi * self.lattice.volume();
        }
        out
    }

    /// Errors with [`GaugeError::SupportEscape`] when the fields in the outer
    /// [`GUARD_BAND`] sites exceed [`SUPPORT_TOL`] of their peak.
    pub fn check_support(&self, fields: &[f64]) -> Result<()> {
        let ns = self.sites();
        let vol = self.lattice.volume();
        let value = |i: usize| fields[i].abs().max(fields[ns + i].abs() / vol);
        let peak = (0..ns).map(value).fold(0.0, f64::max);
        if peak == 0.0 {
            return Ok(());
        }
        for i in 0..ns {
            let in_band = (0..self.lattice.d).any(|a| {
                let c = self.lattice.index_along(i, a);
                c < GUARD_BAND || c + GUARD_BAND >= self.lattice.n
            });
            if in_band && value(i) > SUPPORT_TOL * peak {
                return Err(GaugeError::SupportEscape(format!(
                    "site {i} carries {:e} of the peak amplitude",
                    value(i) / peak
                )));
            }
        }
        Ok(())
    }
}

/// Which lattice generator a [`PftGenerator`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    /// `h = dz^D Σ ½(π² + |∇φ|² + V)`.
    Energy,
    /// `p = dz^D Σ π φ_{,1}`.
    Momentum,
    /// `κ_B = dz^D Σ z¹ ½(π² + |∇φ|² + V)`.
    Boost,
    /// `κ_R = dz² Σ π (z¹ φ_{,2} - z² φ_{,1})`.
    Rotation,
}

/// A lattice generator on `(φ…, Π…)` with analytic gradient.
#[derive(Debug, Clone)]
pub struct PftGenerator {
    kind: GeneratorKind,
    lattice: Lattice,
    weight: Vec<f64>,
    z2: Vec<f64>,
}

impl PftGenerator {
    fn new(kind: GeneratorKind, lattice: &Lattice) -> Self {
        let ns = lattice.sites();
        let weight = (0..ns).map(|i| lattice.coordinate(i, 0)).collect();
        let z2 = if lattice.d == 2 {
            (0..ns).map(|i| lattice.coordinate(i, 1)).collect()
        } else {
            Vec::new()
        };
        Self {
            kind,
            lattice: lattice.clone(),
            weight,
            z2,
        }
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    fn density(&self, phi: &[f64], pi: &[f64], i: usize) -> f64 {
        let l = &self.lattice;
        let grad: f64 = (0..l.d).map(|a| l.diff_dirichlet(phi, i, a).powi(2)).sum();
        0.5 * (pi[i] * pi[i] + grad + 0.5 * l.mu * l.mu * phi[i] * phi[i])
    }
}

impl ScalarField for PftGenerator {
    fn label(&self) -> String {
        match self.kind {
            GeneratorKind::Energy => "h",
            GeneratorKind::Momentum => "p",
            GeneratorKind::Boost => "kappa_B",
            GeneratorKind::Rotation => "kappa_R",
        }
        .into()
    }

    fn eval(&self, z: &[f64]) -> Result<f64> {
        let l = &self.lattice;
        let ns = l.sites();
        let vol = l.volume();
        let phi = &z[..ns];
        let pi: Vec<f64> = z[ns..2 * ns].iter().map(|v| v / vol).collect();
        let sum: f64 = match self.kind {
            GeneratorKind::Energy => (0..ns).map(|i| self.density(phi, &pi, i)).sum(),
            GeneratorKind::Boost => (0..ns).map(|i| self.weight[i] * self.density(phi, &pi, i)).sum(),
            GeneratorKind::Momentum => (0..ns).map(|i| pi[i] * l.diff_dirichlet(phi, i, 0)).sum(),
            GeneratorKind::Rotation => (0..ns)
                .map(|i| {
                    pi[i] * (self.weight[i] * l.diff_dirichlet(phi, i, 1) - self.z2[i] * l.diff_dirichlet(phi, i, 0))
                })
                .sum(),
        };
        Ok(vol * sum)
    }

    fn analytic_grad(&self, z: &[f64]) -> Option<Result<Vec<f64>>> {
        let l = &self.lattice;
        let ns = l.sites();
        let vol = l.volume();
        let phi = &z[..ns];
        let big_pi = &z[ns..2 * ns];
        let pi: Vec<f64> = big_pi.iter().map(|v| v / vol).collect();
        let mu2 = l.mu * l.mu;
        let mut g = vec![0.0; 2 * ns];
        match self.kind {
            GeneratorKind::Energy | GeneratorKind::Boost => {
                let w: Vec<f64> = match self.kind {
                    GeneratorKind::Boost => self.weight.clone(),
                    _ => vec![1.0; ns],
                };
                for i in 0..ns {
                    g[i] = vol * 0.5 * mu2 * w[i] * phi[i];
                    g[ns + i] = w[i] * pi[i];
                }
                for a in 0..l.d {
                    let dphi = l.apply_diff(phi, a);
                    let wd: Vec<f64> = dphi.iter().zip(&w).map(|(d, w)| d * w).collect();
                    let ddphi = l.apply_diff(&wd, a);
                    for i in 0..ns {
                        g[i] -= vol * ddphi[i];
                    }
                }
            }
            GeneratorKind::Momentum => {
                let dphi = l.apply_diff(phi, 0);
                let dpi = l.apply_diff(big_pi, 0);
                for i in 0..ns {
                    g[i] = -dpi[i];
                    g[ns + i] = dphi[i];
                }
            }
            GeneratorKind::Rotation => {
                let d0 = l.apply_diff(phi, 0);
                let d1 = l.apply_diff(phi, 1);
                let a: Vec<f64> = (0..ns).map(|i| self.weight[i] * big_pi[i]).collect();
                let b: Vec<f64> = (0..ns).map(|i| self.z2[i] * big_pi[i]).collect();
                let da = l.apply_diff(&a, 1);
                let db = l.apply_diff(&b, 0);
                for i in 0..ns {
                    g[i] = -da[i] + db[i];
                    g[ns + i] = self.weight[i] * d1[i] - self.z2[i] * d0[i];
                }
            }
        }
        Some(Ok(g))
    }
}

/// The lattice Poincaré generators used by the boost checks.
#[derive(Debug, Clone)]
pub struct PftGenerators {
    pub h: Arc<PftGenerator>,
    pub p_momentum: Arc<PftGenerator>,
    pub kappa_b: Arc<PftGenerator>,
    /// Present for `D = 2` only.
    pub kappa_r: Option<Arc<PftGenerator>>,
}

pub fn pft_generators(model: &LatticePft) -> PftGenerators {
    let l = &model.lattice;
    PftGenerators {
        h: Arc::new(PftGenerator::new(GeneratorKind::Energy, l)),
        p_momentum: Arc::new(PftGenerator::new(GeneratorKind::Momentum, l)),
        kappa_b: Arc::new(PftGenerator::new(GeneratorKind::Boost, l)),
        kappa_r: (l.d == 2).then(|| Arc::new(PftGenerator::new(GeneratorKind::Rotation, l))),
    }
}

/// Outcome of one boost check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoostReport {
    pub s0: f64,
    pub dz: f64,
    /// `H` at the `κ_B` flow image.
    pub h_flowed: f64,
    /// `cosh(s0) H + sinh(s0) P` at the initial configuration.
    pub h_expected: f64,
    pub abs_deviation: f64,
    pub rel_deviation: f64,
}

/// Flows `config` by `κ_B` for parameter `s0` and compares `H` there with
/// `cosh(s0) H + sinh(s0) P`.
pub fn verify_boost_hamiltonian(model: &LatticePft, s0: f64, config: &[f64], opts: &FlowOptions) -> Result<BoostReport> {
    let ns = model.sites();
    if config.len() != 2 * ns {
        return Err(GaugeError::Dimension(format!(
            "field configuration needs {} values, got {}",
            2 * ns,
            config.len()
        )));
    }
    model.check_support(config)?;
    let gens = pft_generators(model);
    let h0 = gens.h.eval(config)?;
    let p0 = gens.p_momentum.eval(config)?;
    let expected = s0.cosh() * h0 + s0.sinh() * p0;
    let flowed = if s0 == 0.0 {
        config.to_vec()
    } else {
        hamiltonian_flow(model.true_split(), gens.kappa_b.as_ref(), config, s0, opts)?
    };
    model.check_support(&flowed)?;
    let h1 = gens.h.eval(&flowed)?;
    let abs = (h1 - expected).abs();
    Ok(BoostReport {
        s0,
        dz: model.lattice.dz,
        h_flowed: h1,
        h_expected: expected,
        abs_deviation: abs,
        rel_deviation: abs / expected.abs().max(f64::MIN_POSITIVE),
    })
}

/// Least-squares slope of `log e` against `log dz`.
pub fn convergence_order(dz: &[f64], err: &[f64]) -> f64 {
    let xs: Vec<f64> = dz.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> LatticePft {
        make_lattice_pft(LatticePftParams {
            d: 1,
            n: 32,
            dz: 0.2,
            mu: 1.0,
        })
        .unwrap()
    }

    #[test]
    fn identity_embedding_geometry() {
        let m = small();
        let ns = m.sites();
        let x0 = vec![0.0; ns];
        let x1: Vec<f64> = (0..ns).map(|i| m.lattice.coordinate(i, 0)).collect();
        let g = m.lattice.geometry(&[&x0, &x1], 5).unwrap();
        assert!((g.n[0] - 1.0).abs() < 1e-14 && g.n[1].abs() < 1e-14);
        assert!((g.det_q - 1.0).abs() < 1e-14);
    }

    #[test]
    fn generator_gradients_match_differences() {
        let m = small();
        let gens = pft_generators(&m);
        let cfg = m.gaussian_packet(1.0, 0.8, &[0.3]);
        for g in [&gens.h, &gens.p_momentum, &gens.kappa_b] {
            let analytic = g.analytic_grad(&cfg).unwrap().unwrap();
            struct Plain<'a>(&'a PftGenerator);
            impl ScalarField for Plain<'_> {
                fn label(&self) -> String {
                    self.0.label()
                }
                fn eval(&self, z: &[f64]) -> Result<f64> {
                    self.0.eval(z)
                }
            }
            let fd = crate::phase::gradient(&Plain(g), &cfg, None).unwrap();
            for (a, b) in analytic.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-7 * a.abs().max(1.0), "{} {a} {b}", g.label());
            }
        }
    }

    #[test]
    fn zero_field_generators_vanish() {
        let m = small();
        let gens = pft_generators(&m);
        let zero = vec![0.0; 2 * m.sites()];
        assert_eq!(gens.h.eval(&zero).unwrap(), 0.0);
        assert_eq!(gens.p_momentum.eval(&zero).unwrap(), 0.0);
        assert_eq!(gens.kappa_b.eval(&zero).unwrap(), 0.0);
    }

    #[test]
    fn rejects_three_dimensions() {
        assert!(make_lattice_pft(LatticePftParams {
            d: 3,
            n: 32,
            dz: 0.1,
            mu: 0.0
        })
        .is_err());
    }
}
