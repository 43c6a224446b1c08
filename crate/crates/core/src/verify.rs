//! Invariant suites behind the `verify` command.
//!
//! Every suite samples points from a seeded generator, runs the engine's
//! flow-based computation and compares it with the model's closed forms.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GaugeError, Result};
use crate::flow::{flow, flow_to_cut, FlowGenerator, FlowOptions};
use crate::gauge::{constraint_residual, GaugeFrame};
use crate::models::kepler::Kepler;
use crate::models::lattice::{convergence_order, pft_generators, verify_boost_hamiltonian, LatticePft};
use crate::models::particle::RelativisticParticle;
use crate::models::toy::LinearToy;
use crate::models::EnergyConstrained;
use crate::phase::{dirac_bracket, gradient, poisson_bracket, CoordinateFunction, PhasePoint, ScalarField};
use crate::relational::{evolve_geometric_samples, evolve_hamiltonian, reduced_hamiltonian, RelationalObservable};
use crate::report::CheckEntry;
use crate::rrft::{apply_rrft, check_symplectic, invert_rrft, pullback_hamiltonian, rrft_point, FrameMap, FramePair};

/// Sampling and numerics shared by all suites.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    pub points: usize,
    pub seed: u64,
    pub opts: FlowOptions,
    /// Finite-difference step of the symplecticity Jacobian.
    pub fd_step: f64,
    /// Overrides every check's default tolerance.
    pub tol: Option<f64>,
    /// Cut parameter of the source frame.
    pub t: f64,
    /// Cut parameter of the target frame.
    pub t_hat: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            points: 50,
            seed: 0,
            opts: FlowOptions::default(),
            fd_step: 2e-4,
            tol: None,
            t: 0.0,
            t_hat: 0.0,
        }
    }
}

impl SuiteOptions {
    fn tol(&self, default: f64) -> f64 {
        self.tol.unwrap_or(default)
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// Flow options for maps differentiated numerically.
    fn tight(&self) -> FlowOptions {
        FlowOptions::with_tolerances(self.opts.rtol.min(1e-12), self.opts.atol.min(1e-14))
    }
}

/// Step of the centred gauge-invariance difference.
const INVARIANCE_STEP: f64 = 1e-3;

/// Points fed to the symplecticity check, which costs `4·dim` map
/// evaluations per point.
const SYMPLECTIC_POINTS: usize = 20;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn spread(values: &[f64]) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

/// True-sector values of the observables `O_q(t), O_p(t)` at `z`.
pub fn observe(frame: &GaugeFrame, t: f64, z: &PhasePoint, opts: &FlowOptions) -> Result<Vec<f64>> {
    Ok(frame.project(&flow_to_cut(frame, t, z, opts)?))
}

/// Largest centred difference quotient of the observables of `frame` at
/// `t` along the flow of its active constraint.
pub fn gauge_invariance(frame: &GaugeFrame, t: f64, points: &[PhasePoint], opts: &FlowOptions) -> Result<f64> {
    let gen = FlowGenerator::unit(frame.template().constraints.clone(), frame.active_index())?;
    let mut worst: f64 = 0.0;
    for z in points {
        let plus = observe(frame, t, &flow(&gen, z, INVARIANCE_STEP, opts)?, opts)?;
        let minus = observe(frame, t, &flow(&gen, z, -INVARIANCE_STEP, opts)?, opts)?;
        worst = worst.max(max_abs_diff(&plus, &minus) / (2.0 * INVARIANCE_STEP));
    }
    Ok(worst)
}

/// Largest difference between the Hamiltonian and geometric evolutions of
/// `qp0` sampled at `samples` uniform times over `[t0, t1]`.
pub fn route_difference(
    frame: &GaugeFrame,
    qp0: &[f64],
    t0: f64,
    t1: f64,
    samples: usize,
    opts: &FlowOptions,
) -> Result<f64> {
    let ham = evolve_hamiltonian(frame, qp0, t0, t1, samples, opts)?;
    let geo = evolve_geometric_samples(frame, qp0, t0, t1, samples, opts)?;
    Ok(ham
        .states
        .iter()
        .zip(&geo.states)
        .fold(0.0, |m, (a, b)| m.max(max_abs_diff(a, b))))
}

/// Points whose observable brackets are differentiated; each costs
/// `2·dim` flows per true coordinate.
const BRACKET_POINTS: usize = 10;

/// Properties of the observable map of `frame` at `t` on on-surface points:
/// reference fields map to `k(t)`, the observables of the true coordinates
/// are canonically conjugate, and Dirac brackets of coordinate functions do
/// not depend on the cut parameter (compared at `t` and `t_other`).
pub fn observable_properties(
    frame: &GaugeFrame,
    t: f64,
    t_other: f64,
    points: &[PhasePoint],
    so: &SuiteOptions,
) -> Result<Vec<CheckEntry>> {
    let split = frame.split().clone();
    let n_true = split.n_true();
    let k = frame.k(t);

    let mut triviality: f64 = 0.0;
    for z in points {
        let landed = flow_to_cut(frame, t, z, &so.opts)?;
        for (i, ki) in k.iter().enumerate() {
            triviality = triviality.max((landed[split.x(i)] - ki).abs());
        }
    }

    let coords: Vec<CoordinateFunction> = (0..split.dim()).map(|j| CoordinateFunction::new(&split, j)).collect();
    let observables: Vec<RelationalObservable> = (0..2 * n_true)
        .map(|j| RelationalObservable::new(Arc::new(coords[j].clone()), frame.clone(), t).with_options(so.tight()))
        .collect();
    let bracket_points = &points[..points.len().min(BRACKET_POINTS)];
    let mut canonical: f64 = 0.0;
    let mut dirac: f64 = 0.0;
    for z in bracket_points {
        let grads: Vec<Vec<f64>> = observables
            .iter()
            .map(|o| gradient(o, z, None))
            .collect::<Result<_>>()?;
        for a in 0..2 * n_true {
            for b in 0..2 * n_true {
                let expected = split.bracket_from_gradients(
                    &coords[a].analytic_grad(z).expect("coordinate gradient")?,
                    &coords[b].analytic_grad(z).expect("coordinate gradient")?,
                );
                let got = split.bracket_from_gradients(&grads[a], &grads[b]);
                canonical = canonical.max((got - expected).abs());
            }
        }
        for a in 0..split.dim() {
            for b in a + 1..split.dim() {
                let here = dirac_bracket(&coords[a], &coords[b], frame, t, z)?;
                let there = dirac_bracket(&coords[a], &coords[b], frame, t_other, z)?;
                dirac = dirac.max((here - there).abs());
            }
        }
    }
    Ok(vec![
        CheckEntry::at_most("reference_triviality", triviality, so.tol(1e-10), points.len()),
        CheckEntry::at_most("canonical_brackets", canonical, so.tol(1e-6), bracket_points.len()),
        CheckEntry::at_most("dirac_t_independence", dirac, so.tol(1e-9), bracket_points.len()),
    ])
}

fn pair_of(frame_a: &GaugeFrame, frame_b: &GaugeFrame) -> Result<Arc<FramePair>> {
    Ok(Arc::new(FramePair::new(frame_a.clone(), frame_b.clone())?))
}

/// Spread of the source frame's reference observable and of the target
/// frame's observable of the same kinematical coordinate.
fn fluctuation_checks(
    pair: &FramePair,
    points_a: &[PhasePoint],
    so: &SuiteOptions,
) -> Result<Vec<CheckEntry>> {
    let (fa, fb) = (&pair.frame_a, &pair.frame_b);
    let xa = fa.split().x(0);
    let mut own = Vec::with_capacity(points_a.len());
    let mut other = Vec::with_capacity(points_a.len());
    for z in points_a {
        own.push(flow_to_cut(fa, so.t, z, &so.opts)?[xa]);
        let zb = PhasePoint::new(fb.split().clone(), pair.a_to_b(z))?;
        let landed = flow_to_cut(fb, so.t_hat, &zb, &so.opts)?;
        other.push(pair.b_to_a(&landed)[xa]);
    }
    Ok(vec![
        CheckEntry::at_most("fluctuation_reference_spread", spread(&own), so.tol(1e-10), own.len()),
        CheckEntry::above("fluctuation_other_frame_spread", spread(&other), 0.1, other.len()),
    ])
}

/// Suite for the relativistic particle; `frame_a` must be the time frame
/// and `frame_b` the space frame.
pub fn particle_checks(
    model: &RelativisticParticle,
    frame_a: &GaugeFrame,
    frame_b: &GaugeFrame,
    so: &SuiteOptions,
) -> Result<Vec<CheckEntry>> {
    let d = model.params.d;
    let m = model.params.m;
    let mut rng = so.rng();
    let k = frame_a.k(so.t)[0];
    let k_hat = frame_b.k(so.t_hat)[0];
    let k_hat_rate = frame_b.k_rate(so.t_hat)[0];
    let pair = pair_of(frame_a, frame_b)?;
    let map = FrameMap::new(pair.clone(), so.t, so.t_hat).with_options(so.opts);
    let inverse = invert_rrft(&map);
    let tight = FrameMap::new(pair.clone(), so.t, so.t_hat).with_options(so.tight());
    let split = frame_a.split().clone();

    let mut points = Vec::with_capacity(so.points);
    let mut cut_points = Vec::with_capacity(so.points);
    for _ in 0..so.points {
        let q: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut p = vec![rng.random_range(-3.0..-0.05)];
        p.extend((1..d).map(|_| rng.random_range(-1.0..1.0)));
        let x = rng.random_range(-2.0..2.0);
        let mut z = q.clone();
        z.extend(&p);
        z.extend([x, 0.0]);
        points.push((q, p, x, frame_a.complete(&z)?));
        let mut qp: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        qp.push(rng.random_range(-3.0..-0.05));
        qp.extend((1..d).map(|_| rng.random_range(-1.0..1.0)));
        cut_points.push(qp);
    }

    let mut obs_err: f64 = 0.0;
    let mut min_h = f64::INFINITY;
    for (q, p, x, z) in &points {
        let o = observe(frame_a, so.t, z, &so.opts)?;
        obs_err = obs_err.max(max_abs_diff(&o, &model.oracle_obs(q, p, *x, k)));
        min_h = min_h.min(frame_a.constraints().h(0, z)?);
    }

    let mut rrft_err: f64 = 0.0;
    let mut round_err: f64 = 0.0;
    let mut pull_err: f64 = 0.0;
    let mut min_h_hat = f64::INFINITY;
    for qp in &cut_points {
        let image = apply_rrft(&map, qp)?;
        rrft_err = rrft_err.max(max_abs_diff(&image, &model.oracle_rrft(&qp[..d], &qp[d..], k, k_hat)));
        round_err = round_err.max(max_abs_diff(&apply_rrft(&inverse, &image)?, qp));
        let pb = pullback_hamiltonian(&map, qp)?;
        pull_err = pull_err.max((pb.h_b_pullback - model.oracle_pullback(&qp[d..], k_hat_rate)).abs());
        let landed = rrft_point(&map, qp)?;
        min_h_hat = min_h_hat.min(frame_b.constraints().h(0, &landed)?.abs());
    }

    let symplectic_pts: Vec<Vec<f64>> = cut_points.iter().take(SYMPLECTIC_POINTS).cloned().collect();
    let symp = check_symplectic(&|z: &[f64]| apply_rrft(&tight, z), &symplectic_pts, so.fd_step)?;

    let zs: Vec<PhasePoint> = points.iter().map(|p| p.3.clone()).collect();
    let invariance = gauge_invariance(frame_a, so.t, &zs, &so.opts)?;
    debug_assert_eq!(split.n_true(), d);

    let n = so.points;
    let mut out = vec![
        CheckEntry::at_most("oracle_obs", obs_err, so.tol(1e-8), n),
        CheckEntry::at_most("oracle_rrft", rrft_err, so.tol(1e-6), n),
        CheckEntry::at_most("symplectic", symp, so.tol(1e-6), symplectic_pts.len()),
        CheckEntry::at_most("roundtrip", round_err, so.tol(1e-7), n),
        CheckEntry::at_most("gauge_invariance", invariance, so.tol(1e-6), n),
        CheckEntry::at_most("oracle_pullback", pull_err, so.tol(1e-8), n),
        CheckEntry::at_most("h_lower_bound", (m - min_h).max(0.0), 1e-9, n),
        CheckEntry::above("h_hat_below_mass", m - min_h_hat, 0.0, n),
    ];
    out.extend(observable_properties(frame_a, so.t, so.t + 1.0, &zs, so)?);
    out.extend(fluctuation_checks(&pair, &zs, so)?);
    Ok(out)
}

/// Sampled Kepler point `(r, p, φ)` with `l = -h(r, p)`.
#[derive(Debug, Clone, Copy)]
struct KeplerSample {
    r: f64,
    p: f64,
    phi: f64,
    l: f64,
}

fn kepler_samples(model: &Kepler, k: f64, k_hat: f64, so: &SuiteOptions) -> Result<Vec<KeplerSample>> {
    if !(k_hat > 0.0) {
        return Err(GaugeError::InvalidArgument(format!(
            "radial clock value must be positive, got {k_hat}"
        )));
    }
    let mut rng = so.rng();
    let mut out = Vec::with_capacity(so.points);
    let mut attempts = 0;
    while out.len() < so.points && attempts < 100 * so.points.max(1) {
        attempts += 1;
        let r: f64 = rng.random_range(0.5..4.0);
        let p: f64 = rng.random_range(-1.2..-0.05);
        let phi = k + rng.random_range(-1.0..1.0);
        let l = -model.h(r, p)?;
        let r_min = 1.0 / (1.0 / model.r1(l) + 1.0 / model.r0(l));
        if r_min > 0.9 * k_hat {
            continue;
        }
        match model.oracle_shape(r, p, phi, k) {
            Ok(big_r) if big_r > 0.0 && big_r < 50.0 => {}
            _ => continue,
        }
        out.push(KeplerSample { r, p, phi, l });
    }
    if out.len() < so.points {
        return Err(GaugeError::InvalidArgument(format!(
            "found only {} admissible Kepler points for k̂ = {k_hat}",
            out.len()
        )));
    }
    Ok(out)
}

/// Suite for the Kepler model; `frame_a` must be the angular frame and
/// `frame_b` the radial frame.
pub fn kepler_checks(model: &Kepler, frame_a: &GaugeFrame, frame_b: &GaugeFrame, so: &SuiteOptions) -> Result<Vec<CheckEntry>> {
    let k = frame_a.k(so.t)[0];
    let k_rate = frame_a.k_rate(so.t)[0];
    let k_hat = frame_b.k(so.t_hat)[0];
    let k_hat_rate = frame_b.k_rate(so.t_hat)[0];
    let samples = kepler_samples(model, k, k_hat, so)?;
    let pair = pair_of(frame_a, frame_b)?;
    let map = FrameMap::new(pair.clone(), so.t, so.t_hat).with_options(so.opts);
    let inverse = invert_rrft(&map);
    let tight = FrameMap::new(pair.clone(), so.t, so.t_hat).with_options(so.tight());

    let (mut phi_err, mut shape_err, mut rrft_err, mut ham_err, mut round_err) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    let mut angular_points = Vec::with_capacity(samples.len());
    for s in &samples {
        let zb = frame_b.complete(&[s.phi, s.l, s.r, 0.0])?;
        let obs_b = observe(frame_b, so.t_hat, &zb, &so.opts)?;
        phi_err = phi_err.max((obs_b[0] - model.oracle_phi_hat(s.r, s.phi, s.l, k_hat)?).abs());

        let za = frame_a.complete(&[s.r, s.p, s.phi, 0.0])?;
        let obs_a = observe(frame_a, so.t, &za, &so.opts)?;
        shape_err = shape_err.max((obs_a[0] - model.oracle_shape(s.r, s.p, s.phi, k)?).abs());
        angular_points.push(za);

        let qp = [s.r, s.p];
        let image = apply_rrft(&map, &qp)?;
        rrft_err = rrft_err.max(max_abs_diff(&image, &model.oracle_rrft(s.r, s.p, k, k_hat)?));
        round_err = round_err.max(max_abs_diff(&apply_rrft(&inverse, &image)?, &qp));

        let pb = pullback_hamiltonian(&map, &qp)?;
        let (pulled, h_s) = model.oracle_hamiltonians(s.r, s.p, k_rate, k_hat, k_hat_rate)?;
        ham_err = ham_err.max((pb.h_b_pullback - pulled).abs()).max((pb.h_a - h_s).abs());
    }
    let symplectic_pts: Vec<Vec<f64>> = samples.iter().take(SYMPLECTIC_POINTS).map(|s| vec![s.r, s.p]).collect();
    let symp = check_symplectic(&|z: &[f64]| apply_rrft(&tight, z), &symplectic_pts, so.fd_step)?;
    let invariance = gauge_invariance(frame_a, so.t, &angular_points, &so.opts)?;
    let n = samples.len();
    let mut out = vec![
        CheckEntry::at_most("oracle_phi_hat", phi_err, so.tol(1e-6), n),
        CheckEntry::at_most("oracle_shape", shape_err, so.tol(1e-6), n),
        CheckEntry::at_most("oracle_rrft", rrft_err, so.tol(1e-6), n),
        CheckEntry::at_most("oracle_hamiltonians", ham_err, so.tol(1e-6), n),
        CheckEntry::at_most("roundtrip", round_err, so.tol(1e-7), n),
        CheckEntry::at_most("symplectic", symp, so.tol(1e-6), symplectic_pts.len()),
        CheckEntry::at_most("gauge_invariance", invariance, so.tol(1e-6), n),
    ];
    out.extend(observable_properties(frame_a, so.t, so.t + 0.5, &angular_points, so)?);
    Ok(out)
}

/// Conserved pair `(g, l)` along both reduced evolutions of one orbit.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitEquivalence {
    /// Angle swept by the angular-frame evolution.
    pub delta_phi: f64,
    /// Largest difference of `(g, l)` between the two frames.
    pub pair_difference: f64,
    /// Largest change of `(g, l)` along either evolution.
    pub drift: f64,
    /// `(φ, g, l)` along the angular-frame evolution.
    pub angular: Vec<[f64; 3]>,
    /// `(r, g, l)` along the radial-frame evolution.
    pub radial: Vec<[f64; 3]>,
}

/// Evolves the orbit with angular momentum `l < 0` through the point
/// `F(r) = f_start`, `φ = 0`, `p < 0`, once in the angular frame with clock
/// `φ = t` over `[0, Δφ]` and once in the radial frame with clock
/// `r = r_start + t̂` up to the radius reached at `φ = Δφ`. Both evolutions
/// track `g = φ - arccos F(r)` and `l`.
pub fn kepler_frame_equivalence(
    model: &Kepler,
    l: f64,
    f_start: f64,
    delta_phi: f64,
    samples: usize,
    opts: &FlowOptions,
) -> Result<OrbitEquivalence> {
    use crate::gauge::GaugeClock;
    use crate::models::kepler::{clamped_acos, ANGULAR_FRAME, RADIAL_FRAME};
    let (r0, r1) = (model.r0(l), model.r1(l));
    let r_start = 1.0 / (1.0 / r0 + f_start / r1);
    let f_end = (clamped_acos(f_start)? + delta_phi).cos();
    let inv_end = 1.0 / r0 + f_end / r1;
    if !(l < 0.0) || !(r_start > 0.0) || !(inv_end > 0.0) || !(f_start.abs() < 1.0) {
        return Err(GaugeError::InvalidArgument(format!(
            "orbit with l = {l}, F = {f_start} does not sweep Δφ = {delta_phi}"
        )));
    }
    let r_end = 1.0 / inv_end;
    let p_start = -model.h_hat(r_start, l)?;
    let g0 = -clamped_acos(f_start)?;

    let angular = model.model.frame(ANGULAR_FRAME, vec![GaugeClock::linear(0.0, 1.0)])?;
    let traj_a = evolve_hamiltonian(&angular, &[r_start, p_start], 0.0, delta_phi, samples, opts)?;
    let mut a_rows = Vec::with_capacity(samples);
    for (t, s) in traj_a.times.iter().zip(&traj_a.states) {
        let la = -model.h(s[0], s[1])?;
        a_rows.push([*t, t - clamped_acos(model.shape_f(s[0], la))?, la]);
    }

    let radial = model.model.frame(RADIAL_FRAME, vec![GaugeClock::linear(r_start, 1.0)])?;
    let traj_b = evolve_hamiltonian(&radial, &[0.0, l], 0.0, r_end - r_start, samples, opts)?;
    let mut b_rows = Vec::with_capacity(samples);
    for (t, s) in traj_b.times.iter().zip(&traj_b.states) {
        let r = r_start + t;
        b_rows.push([r, s[0] - clamped_acos(model.shape_f(r, s[1]))?, s[1]]);
    }

    let mut drift: f64 = 0.0;
    let mut diff: f64 = 0.0;
    for rows in [&a_rows, &b_rows] {
        for row in rows.iter() {
            drift = drift.max((row[1] - g0).abs()).max((row[2] - l).abs());
        }
    }
    for a in &a_rows {
        for b in [&b_rows[0], &b_rows[b_rows.len() - 1]] {
            diff = diff.max((a[1] - b[1]).abs()).max((a[2] - b[2]).abs());
        }
    }
    for b in &b_rows {
        for a in [&a_rows[0], &a_rows[a_rows.len() - 1]] {
            diff = diff.max((a[1] - b[1]).abs()).max((a[2] - b[2]).abs());
        }
    }
    Ok(OrbitEquivalence {
        delta_phi,
        pair_difference: diff,
        drift,
        angular: a_rows,
        radial: b_rows,
    })
}

/// Suite for the linear toy; `frame_a` uses `x` and `frame_b` uses `q` as
/// reference field, with the model's clocks `k` and `k̂`.
pub fn toy_checks(model: &LinearToy, frame_a: &GaugeFrame, frame_b: &GaugeFrame, so: &SuiteOptions) -> Result<Vec<CheckEntry>> {
    let mut rng = so.rng();
    let pair = pair_of(frame_a, frame_b)?;
    let map = FrameMap::new(pair.clone(), so.t, so.t_hat).with_options(so.opts);
    let k_rate = frame_a.k_rate(so.t)[0];
    let k_hat_rate = frame_b.k_rate(so.t_hat)[0];
    let mut obs_err: f64 = 0.0;
    let mut rrft_err: f64 = 0.0;
    let mut ham_err: f64 = 0.0;
    let mut route_err: f64 = 0.0;
    let mut zs = Vec::with_capacity(so.points);
    for j in 0..so.points {
        let (q, p, x) = (
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        let z = frame_a.complete(&[q, p, x, 0.0])?;
        let o = observe(frame_a, so.t, &z, &so.opts)?;
        obs_err = obs_err.max((o[0] - model.oracle_obs_q(q, x, so.t)).abs()).max((o[1] - p).abs());
        zs.push(z);

        let image = apply_rrft(&map, &[q, p])?;
        rrft_err = rrft_err.max(max_abs_diff(&image, &model.oracle_rrft(q, p, so.t, so.t_hat)));

        let pb = pullback_hamiltonian(&map, &[q, p])?;
        let (pulled, h_s) = model.oracle_hamiltonians(p, so.t, so.t_hat);
        ham_err = ham_err.max((pb.h_b_pullback - pulled).abs()).max((pb.h_a - h_s).abs());
        // k̂∘T = -k gives T' = -k'/k̂'.
        if k_hat_rate != 0.0 {
            ham_err = ham_err.max((pb.h_b_pullback * (-k_rate / k_hat_rate) - pb.h_a).abs());
        }
        if j < 10 {
            route_err = route_err.max(route_difference(frame_a, &[q, p], so.t, so.t + 1.0, 5, &so.opts)?);
        }
    }
    let n = so.points;
    let mut out = vec![
        CheckEntry::at_most("oracle_obs", obs_err, so.tol(1e-10), n),
        CheckEntry::at_most("oracle_rrft", rrft_err, so.tol(1e-10), n),
        if k_hat_rate != 0.0 {
            CheckEntry::at_most("hamiltonian_reparametrization", ham_err, so.tol(1e-10), n)
        } else {
            CheckEntry::failed("hamiltonian_reparametrization", so.tol(1e-10))
        },
        CheckEntry::at_most("route_equivalence", route_err, so.tol(1e-7), n.min(10)),
    ];
    out.extend(fluctuation_checks(&pair, &zs, so)?);
    Ok(out)
}

/// Suite for an energy-constrained model on one frame.
pub fn energy_checks(model: &EnergyConstrained, frame: &GaugeFrame, so: &SuiteOptions) -> Result<Vec<CheckEntry>> {
    let mut rng = so.rng();
    let split = frame.split().clone();
    let dim = split.dim();
    let mut points = Vec::with_capacity(so.points);
    let mut attempts = 0;
    while points.len() < so.points && attempts < 100 * so.points.max(1) {
        attempts += 1;
        let mut z: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect();
        z[split.y(0)] = 0.0;
        match frame.complete(&z) {
            Ok(p) => points.push(p),
            Err(GaugeError::BranchViolation(_)) | Err(GaugeError::NoConvergence { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    if points.is_empty() {
        return Ok(vec![CheckEntry::failed("constraint_residual", so.tol(1e-10))]);
    }
    let mut residual: f64 = 0.0;
    for z in &points {
        let kin = frame.to_kinematic(z);
        residual = residual.max(model.raw_constraint(&kin)?.abs()).max(constraint_residual(frame.constraints(), z)?);
    }
    let invariance = gauge_invariance(frame, so.t, &points, &so.opts)?;
    let mut route: f64 = 0.0;
    let mut routed = 0;
    for z in points.iter().take(10) {
        let qp = frame.project(z);
        match route_difference(frame, &qp, so.t, so.t + 1.0, 5, &so.opts) {
            Ok(d) => {
                route = route.max(d);
                routed += 1;
            }
            Err(GaugeError::BranchViolation(_)) | Err(GaugeError::StepFailure { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    let n = points.len();
    Ok(vec![
        CheckEntry::at_most("constraint_residual", residual, so.tol(1e-10), n),
        CheckEntry::at_most("gauge_invariance", invariance, so.tol(1e-6), n),
        if routed > 0 {
            CheckEntry::at_most("route_equivalence", route, so.tol(1e-7), routed)
        } else {
            CheckEntry::failed("route_equivalence", so.tol(1e-7))
        },
    ])
}

/// Gaussian packet used by the lattice checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Packet {
    pub amplitude: f64,
    pub sigma: f64,
    pub center: f64,
}

impl Default for Packet {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            sigma: 0.8,
            center: 1.0,
        }
    }
}

/// Leading `dz²` coefficients of `{κ_B, h} - p` and `{κ_B, p} - h` for a
/// Gaussian packet with `π = -∂φ/∂z¹`:
/// `½∫(∂₁²φ)²` and `½∫(∂₁²φ)² + ¼∫(∂₁∂₂φ)² + (μ²/8)∫(∂₁φ)²`.
pub fn leading_error_coefficients(d: usize, packet: &Packet, mu: f64) -> (f64, f64) {
    let a2 = packet.amplitude * packet.amplitude;
    let s = packet.sigma;
    let sqrt_pi = std::f64::consts::PI.sqrt();
    // One-dimensional Gaussian integrals of φ², φ'², φ''².
    let i0 = s * sqrt_pi;
    let i1 = sqrt_pi / (2.0 * s);
    let i2 = 3.0 * sqrt_pi / (4.0 * s * s * s);
    let (d11, d12, d1) = match d {
        1 => (i2, 0.0, i1),
        _ => (i2 * i0, i1 * i1, i1 * i0),
    };
    let c_h = 0.5 * a2 * d11;
    let c_p = a2 * (0.5 * d11 + 0.25 * d12 + mu * mu / 8.0 * d1);
    (c_h, c_p)
}

/// `{κ_B, h} - p` and `{κ_B, p} - h` on one lattice configuration.
pub fn boost_bracket_errors(model: &LatticePft, config: &[f64]) -> Result<(f64, f64)> {
    let gens = pft_generators(model);
    let z = PhasePoint::new(model.true_split().clone(), config.to_vec())?;
    let kb_h = poisson_bracket(gens.kappa_b.as_ref(), gens.h.as_ref(), &z)?;
    let kb_p = poisson_bracket(gens.kappa_b.as_ref(), gens.p_momentum.as_ref(), &z)?;
    Ok((
        (kb_h - gens.p_momentum.eval(config)?).abs(),
        (kb_p - gens.h.eval(config)?).abs(),
    ))
}

/// Suite for the lattice model at its own spacing.
pub fn lattice_checks(model: &LatticePft, packet: &Packet, s0: f64, so: &SuiteOptions) -> Result<Vec<CheckEntry>> {
    let lat = &model.lattice;
    let ns = model.sites();
    let mut rng = so.rng();

    // Embedding identities on a random spacelike embedding.
    let mut x: Vec<Vec<f64>> = Vec::with_capacity(lat.d + 1);
    x.push((0..ns).map(|_| 0.3 + 0.02 * lat.dz * rng.random_range(-1.0..1.0)).collect());
    for a in 0..lat.d {
        x.push(
            (0..ns)
                .map(|i| lat.coordinate(i, a) + 0.02 * lat.dz * rng.random_range(-1.0..1.0))
                .collect(),
        );
    }
    let (norm_dev, tangent_dev) = model.embedding_identities(&x)?;

    let mut center = vec![packet.center];
    center.extend(std::iter::repeat_n(0.0, lat.d - 1));
    let config = model.gaussian_packet(packet.amplitude, packet.sigma, &center);
    model.check_support(&config)?;
    let gens = pft_generators(model);
    let h = gens.h.eval(&config)?;

    let mut frames = vec![model.identity_lorentz(), model.boost(0.3)];
    if lat.d == 2 {
        frames.push(model.rotation(0.4)?);
    }
    let mut frame_dev: f64 = 0.0;
    for l in &frames {
        let frame = model.inertial_frame(l)?;
        frame_dev = frame_dev.max((reduced_hamiltonian(&frame, so.t, &config)? - h).abs());
    }

    let (c_h, c_p) = leading_error_coefficients(lat.d, packet, lat.mu);
    let dz2 = lat.dz * lat.dz;
    let (e_h, e_p) = boost_bracket_errors(model, &config)?;
    let boost = verify_boost_hamiltonian(model, s0, &config, &so.tight())?;

    let mut out = vec![
        CheckEntry::at_most("embedding_identities", norm_dev.max(tangent_dev), so.tol(1e-12), ns),
        CheckEntry::at_most("frame_hamiltonians", frame_dev / h.abs().max(1.0), so.tol(1e-10), frames.len()),
        CheckEntry::at_most("bracket_boost_h", e_h, 1.5 * c_h * dz2, 1),
        CheckEntry::at_most("bracket_boost_p", e_p, 1.5 * c_p * dz2, 1),
        CheckEntry::at_most("boost_hamiltonian", boost.abs_deviation, 2.0 * s0.abs() * c_h * dz2, 1),
    ];
    if let Some(kr) = &gens.kappa_r {
        let z = PhasePoint::new(model.true_split().clone(), config.clone())?;
        let rot = poisson_bracket(kr.as_ref(), gens.h.as_ref(), &z)?;
        out.push(CheckEntry::at_most("bracket_rotation_h", rot.abs(), 1.5 * c_p * dz2, 1));
    }
    Ok(out)
}

/// Errors of the lattice identities at successive spacings.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementStudy {
    pub dz: Vec<f64>,
    pub bracket_h: Vec<f64>,
    pub bracket_p: Vec<f64>,
    pub boost: Vec<f64>,
    pub order_h: f64,
    pub order_p: f64,
    pub order_boost: f64,
}

/// Evaluates the boost identities of the same packet on lattices of equal
/// extent and the given `(N, dz)`.
pub fn lattice_refinement(
    d: usize,
    grids: &[(usize, f64)],
    mu: f64,
    packet: &Packet,
    s0: f64,
    opts: &FlowOptions,
) -> Result<RefinementStudy> {
    use crate::models::lattice::{make_lattice_pft, LatticePftParams};
    let mut study = RefinementStudy {
        dz: Vec::new(),
        bracket_h: Vec::new(),
        bracket_p: Vec::new(),
        boost: Vec::new(),
        order_h: f64::NAN,
        order_p: f64::NAN,
        order_boost: f64::NAN,
    };
    for &(n, dz) in grids {
        let model = make_lattice_pft(LatticePftParams { d, n, dz, mu })?;
        let mut center = vec![packet.center];
        center.extend(std::iter::repeat_n(0.0, d - 1));
        let config = model.gaussian_packet(packet.amplitude, packet.sigma, &center);
        let (e_h, e_p) = boost_bracket_errors(&model, &config)?;
        let boost = verify_boost_hamiltonian(&model, s0, &config, opts)?;
        study.dz.push(dz);
        study.bracket_h.push(e_h);
        study.bracket_p.push(e_p);
        study.boost.push(boost.abs_deviation);
    }
    if grids.len() >= 2 {
        study.order_h = convergence_order(&study.dz, &study.bracket_h);
        study.order_p = convergence_order(&study.dz, &study.bracket_p);
        study.order_boost = convergence_order(&study.dz, &study.boost);
    }
    Ok(study)
}
