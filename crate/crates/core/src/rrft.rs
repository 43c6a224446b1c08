//! Reference frame transformations between two frames of one model.
//!
//! Two frames of the same kinematical phase space generally pick different
//! reference fields, so some true coordinates of one frame are gauge
//! coordinates of the other. The relational map `S_{t,t̂}` embeds a point on
//! the first frame's cut, flows it with the second frame's constraints onto
//! the second cut and reads off the second frame's true sector.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{GaugeError, Result};
use crate::flow::{flow_to_cut, FlowOptions};
use crate::gauge::{constraint_residual, GaugeFrame};
use crate::phase::PhasePoint;
use crate::relational::reduced_hamiltonian;

/// Two frames over the same kinematical phase space.
#[derive(Debug, Clone)]
pub struct FramePair {
    pub frame_a: GaugeFrame,
    pub frame_b: GaugeFrame,
    /// Frame-B slot of every frame-A slot.
    a_to_b: Vec<usize>,
    /// True positions of A that stay true in B (A-indices).
    pub kept_true: Vec<usize>,
    /// True positions of A that are reference fields of B.
    pub true_to_gauge: Vec<usize>,
    /// Reference fields of A that stay reference fields of B.
    pub kept_gauge: Vec<usize>,
    /// Reference fields of A that are true positions of B.
    pub gauge_to_true: Vec<usize>,
    /// Length scale per true pair used by the identity transformation:
    /// `q̂ = q/ℓ`, `p̂ = p·ℓ`.
    pub irft_scales: Vec<f64>,
}

impl FramePair {
    pub fn new(frame_a: GaugeFrame, frame_b: GaugeFrame) -> Result<Self> {
        let ka = &frame_a.template().kinematic_index;
        let kb = &frame_b.template().kinematic_index;
        let sa = frame_a.split().clone();
        let sb = frame_b.split().clone();
        if sa.dim() != sb.dim() || ka.len() != sa.dim() || kb.len() != sb.dim() {
            return Err(GaugeError::Dimension(
                "frames of a pair must share one kinematical phase space".into(),
            ));
        }
        if sa.n_gauge() != sb.n_gauge() {
            return Err(GaugeError::Dimension(
                "frames of a pair must carry the same number of constraints".into(),
            ));
        }
        let mut b_of_kin = vec![usize::MAX; kb.len()];
        for (slot, &k) in kb.iter().enumerate() {
            b_of_kin[k] = slot;
        }
        let a_to_b: Vec<usize> = ka.iter().map(|&k| b_of_kin[k]).collect();
        if a_to_b.contains(&usize::MAX) {
            return Err(GaugeError::InvalidArgument(
                "kinematical index of a frame is not a permutation".into(),
            ));
        }
        let b_is_true_pos = |slot: usize| slot < sb.n_true();
        let b_is_gauge_pos = |slot: usize| slot >= 2 * sb.n_true() && slot < 2 * sb.n_true() + sb.n_gauge();
        let mut kept_true = Vec::new();
        let mut true_to_gauge = Vec::new();
        for a in 0..sa.n_true() {
            let b = a_to_b[sa.q(a)];
            if b_is_true_pos(b) {
                kept_true.push(a);
            } else if b_is_gauge_pos(b) {
                true_to_gauge.push(a);
            } else {
                return Err(GaugeError::InvalidArgument(format!(
                    "position `{}` of frame `{}` is a momentum in frame `{}`",
                    sa.labels()[sa.q(a)],
                    frame_a.name(),
                    frame_b.name()
                )));
            }
        }
        let mut kept_gauge = Vec::new();
        let mut gauge_to_true = Vec::new();
        for i in 0..sa.n_gauge() {
            let b = a_to_b[sa.x(i)];
            if b_is_gauge_pos(b) {
                kept_gauge.push(i);
            } else if b_is_true_pos(b) {
                gauge_to_true.push(i);
            } else {
                return Err(GaugeError::InvalidArgument(format!(
                    "reference field `{}` of frame `{}` is a momentum in frame `{}`",
                    sa.labels()[sa.x(i)],
                    frame_a.name(),
                    frame_b.name()
                )));
            }
        }
        if true_to_gauge.len() != gauge_to_true.len() {
            return Err(GaugeError::InvalidArgument(
                "numbers of exchanged true and gauge slots differ".into(),
            ));
        }
        let irft_scales = vec![1.0; sa.n_true()];
        Ok(Self {
            frame_a,
            frame_b,
            a_to_b,
            kept_true,
            true_to_gauge,
            kept_gauge,
            gauge_to_true,
            irft_scales,
        })
    }

    /// Sets the length scales used by [`apply_irft`].
    pub fn with_irft_scales(mut self, scales: Vec<f64>) -> Result<Self> {
        if scales.len() != self.frame_a.split().n_true() {
            return Err(GaugeError::Dimension(format!(
                "need {} identification scales, got {}",
                self.frame_a.split().n_true(),
                scales.len()
            )));
        }
        if let Some(s) = scales.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(GaugeError::InvalidArgument(format!(
                "identification scale {s} must be positive"
            )));
        }
        self.irft_scales = scales;
        Ok(self)
    }

    /// Whether the two frames select the same reference fields.
    pub fn is_trivial(&self) -> bool {
        self.true_to_gauge.is_empty()
    }

    /// Frame-A coordinate vector rewritten in frame-B layout.
    pub fn a_to_b(&self, z_a: &[f64]) -> Vec<f64> {
        let mut z_b = vec![0.0; z_a.len()];
        for (a, &b) in self.a_to_b.iter().enumerate() {
            z_b[b] = z_a[a];
        }
        z_b
    }

    /// Frame-B coordinate vector rewritten in frame-A layout.
    pub fn b_to_a(&self, z_b: &[f64]) -> Vec<f64> {
        self.a_to_b.iter().map(|&b| z_b[b]).collect()
    }
}

/// Direction of a [`FrameMap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Frame A at `t` to frame B at `t̂`.
    Forward,
    /// Frame B at `t̂` to frame A at `t`.
    Backward,
}

/// `S_{t,t̂}` for one frame pair.
#[derive(Debug, Clone)]
pub struct FrameMap {
    pub pair: Arc<FramePair>,
    pub t: f64,
    pub t_hat: f64,
    pub direction: Direction,
    pub opts: FlowOptions,
}

impl FrameMap {
    pub fn new(pair: Arc<FramePair>, t: f64, t_hat: f64) -> Self {
        Self {
            pair,
            t,
            t_hat,
            direction: Direction::Forward,
            opts: FlowOptions::default(),
        }
    }

    pub fn with_options(mut self, opts: FlowOptions) -> Self {
        self.opts = opts;
        self
    }

    /// `(source frame, source time, target frame, target time)`.
    pub fn roles(&self) -> (&GaugeFrame, f64, &GaugeFrame, f64) {
        match self.direction {
            Direction::Forward => (&self.pair.frame_a, self.t, &self.pair.frame_b, self.t_hat),
            Direction::Backward => (&self.pair.frame_b, self.t_hat, &self.pair.frame_a, self.t),
        }
    }

    fn to_target_layout(&self, z: &[f64]) -> Vec<f64> {
        match self.direction {
            Direction::Forward => self.pair.a_to_b(z),
            Direction::Backward => self.pair.b_to_a(z),
        }
    }
}

/// Constraint residual above which a transported point is declared to sit
/// on another sector of the target frame.
pub const SECTOR_TOL: f64 = 1e-8;

fn check_sector(frame: &GaugeFrame, z: &[f64], stage: &str) -> Result<()> {
    let sys = frame.constraints();
    let residual = match constraint_residual(sys, z) {
        Ok(r) => r,
        Err(GaugeError::BranchViolation(msg)) | Err(GaugeError::DomainViolation(msg)) => {
            return Err(GaugeError::SectorMismatch(format!(
                "{stage}: point outside the domain of frame `{}` ({msg})",
                frame.name()
            )))
        }
        Err(e) => return Err(e),
    };
    let scale = z.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    if residual > SECTOR_TOL * scale {
        return Err(GaugeError::SectorMismatch(format!(
            "{stage}: point lies on a branch of frame `{}` other than the selected one (residual {residual:e})",
            frame.name()
        )));
    }
    sys.check_branch(z).map_err(|e| match e {
        GaugeError::BranchViolation(msg) => GaugeError::SectorMismatch(format!("{stage}: {msg}")),
        other => other,
    })
}

/// Full kinematical image of `S`: the landed point in target-frame layout.
pub fn rrft_point(map: &FrameMap, qp: &[f64]) -> Result<PhasePoint> {
    let (source, t_src, target, t_dst) = map.roles();
    let z_src = source.embed(t_src, qp)?;
    let z_dst = PhasePoint::new(target.split().clone(), map.to_target_layout(&z_src))?;
    check_sector(target, &z_dst, "embedding")?;
    let landed = flow_to_cut(target, t_dst, &z_dst, &map.opts)?;
    check_sector(target, &landed, "landing")?;
    Ok(landed)
}

/// `S_{t,t̂}(q, p)`: embed on the source cut, flow to the target cut with the
/// target frame's constraints, project to the target true sector.
pub fn apply_rrft(map: &FrameMap, qp: &[f64]) -> Result<Vec<f64>> {
    let (_, _, target, _) = map.roles();
    Ok(target.project(&rrft_point(map, qp)?))
}

/// The swapped-direction map.
pub fn invert_rrft(map: &FrameMap) -> FrameMap {
    let mut inv = map.clone();
    inv.direction = match map.direction {
        Direction::Forward => Direction::Backward,
        Direction::Backward => Direction::Forward,
    };
    inv
}

/// Slot-for-slot identification of true pairs, `q̂^a = q^a/ℓ_a`,
/// `p̂_a = p_a·ℓ_a`, checked against the target frame's true domain.
pub fn apply_irft(pair: &FramePair, qp: &[f64]) -> Result<Vec<f64>> {
    let n = pair.frame_a.split().n_true();
    if qp.len() != 2 * n {
        return Err(GaugeError::Dimension(format!(
            "identity transformation expects {} values, got {}",
            2 * n,
            qp.len()
        )));
    }
    let mut out = qp.to_vec();
    for (a, l) in pair.irft_scales.iter().enumerate() {
        out[a] = qp[a] / l;
        out[n + a] = qp[n + a] * l;
    }
    pair.frame_b
        .constraints()
        .check_true_domain(&out)
        .map_err(|e| match e {
            GaugeError::RangeViolation(m) => GaugeError::RangeViolation(m),
            other => GaugeError::RangeViolation(other.to_string()),
        })?;
    Ok(out)
}

/// Reduced Hamiltonians on both sides of the map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PullbackPair {
    /// `ĥ_s(S(q, p); t̂)`.
    pub h_b_pullback: f64,
    /// `h_s(q, p; t)`.
    pub h_a: f64,
}

impl PullbackPair {
    pub fn abs_diff(&self) -> f64 {
        (self.h_b_pullback - self.h_a).abs()
    }
}

/// Evaluates the target frame's reduced Hamiltonian at the image `S(q, p)`
/// and the source frame's reduced Hamiltonian at `(q, p)`. No relation
/// between the two is assumed.
pub fn pullback_hamiltonian(map: &FrameMap, qp: &[f64]) -> Result<PullbackPair> {
    let (source, t_src, target, t_dst) = map.roles();
    let image = apply_rrft(map, qp)?;
    Ok(PullbackPair {
        h_b_pullback: reduced_hamiltonian(target, t_dst, &image)?,
        h_a: reduced_hamiltonian(source, t_src, qp)?,
    })
}

/// Jacobian of a map on `(q…, p…)` by central differences with one
/// Richardson level.
pub fn jacobian<F>(map_fn: &F, z: &[f64], fd_step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + ?Sized,
{
    let n = z.len();
    let base = map_fn(z)?;
    let m = base.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut probe = z.to_vec();
    for j in 0..n {
        let h = fd_step * z[j].abs().max(1.0);
        let mut central = |h: f64| -> Result<Vec<f64>> {
            probe[j] = z[j] + h;
            let plus = map_fn(&probe)?;
            probe[j] = z[j] - h;
            let minus = map_fn(&probe)?;
            probe[j] = z[j];
            Ok(plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect())
        };
        let coarse = central(h)?;
        let fine = central(0.5 * h)?;
        for i in 0..m {
            jac[(i, j)] = (4.0 * fine[i] - coarse[i]) / 3.0;
        }
    }
    Ok(jac)
}

/// The Poisson tensor `Ω_ij = {z_i, z_j}` on `(q…, p…)`: `[[0, -I], [I, 0]]`.
pub fn poisson_tensor(n_pairs: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n_pairs, 2 * n_pairs);
    for a in 0..n_pairs {
        omega[(a, n_pairs + a)] = -1.0;
        omega[(n_pairs + a, a)] = 1.0;
    }
    omega
}

/// `max_points ‖J Ω Jᵀ - Ω‖∞` with `J` the finite-difference Jacobian.
pub fn check_symplectic<F>(map_fn: &F, points: &[Vec<f64>], fd_step: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + ?Sized,
{
    let mut worst: f64 = 0.0;
    for z in points {
        if z.len() % 2 != 0 {
            return Err(GaugeError::Dimension("symplectic check needs (q, p) pairs".into()));
        }
        let omega = poisson_tensor(z.len() / 2);
        let jac = jacobian(map_fn, z, fd_step)?;
        let dev = &jac * &omega * jac.transpose() - &omega;
        worst = worst.max(dev.amax());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_map_is_symplectic() {
        let id = |z: &[f64]| -> Result<Vec<f64>> { Ok(z.to_vec()) };
        let pts = vec![vec![0.3, -1.2, 4.0, 0.5], vec![10.0, 2.0, -3.0, 1.0]];
        assert!(check_symplectic(&id, &pts, 1e-4).unwrap() <= 1e-9);
    }

    #[test]
    fn reflection_is_symplectic() {
        let map = |z: &[f64]| -> Result<Vec<f64>> { Ok(vec![2.5 - z[0], -z[1]]) };
        let dev = check_symplectic(&map, &[vec![0.7, -0.2]], 1e-3).unwrap();
        assert!(dev < 1e-10, "{dev}");
    }

    #[test]
    fn scaling_one_pair_is_not_symplectic() {
        let map = |z: &[f64]| -> Result<Vec<f64>> { Ok(vec![2.0 * z[0], z[1]]) };
        let dev = check_symplectic(&map, &[vec![0.7, -0.2]], 1e-3).unwrap();
        assert!((dev - 1.0).abs() < 1e-9);
    }
}
