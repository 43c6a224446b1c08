use approx::assert_abs_diff_eq;

use gaugeframe::flow::{flow, flow_to_cut, trace_orbit, FlowGenerator, FlowOptions};
use gaugeframe::gauge::{constraint_residual, GaugeClock, Sign};
use gaugeframe::models::energy::frame_name;
use gaugeframe::models::kepler::ANGULAR_FRAME;
use gaugeframe::models::lattice::convergence_order;
use gaugeframe::models::particle::TIME_FRAME;
use gaugeframe::models::{
    make_energy_constrained, make_kepler, make_lattice_pft, make_linear_toy, make_relativistic_particle, pft_generators,
    verify_boost_hamiltonian, KeplerParams, LatticePftParams, Metric, Potential, RelativisticParticleParams,
};
use gaugeframe::phase::{PhasePoint, ScalarField};
use gaugeframe::relational::reduced_hamiltonian;
use gaugeframe::verify::{self, Packet, SuiteOptions};
use gaugeframe::GaugeError;

fn unit() -> GaugeClock {
    GaugeClock::linear(0.0, 1.0)
}

#[test]
fn particle_lands_on_cut_in_closed_form() {
    let model = make_relativistic_particle(RelativisticParticleParams { d: 1, m: 1.0 }).unwrap();
    let frame = model.model.frame(TIME_FRAME, vec![unit()]).unwrap();
    let z = frame.complete(&[0.0, -1.0, 0.0, 0.0]).unwrap();
    assert_abs_diff_eq!(z[3], -2f64.sqrt(), epsilon = 1e-15);
    let landed = flow_to_cut(&frame, 2.0, &z, &FlowOptions::default()).unwrap();
    let expect = [-2f64.sqrt(), -1.0, 2.0, -2f64.sqrt()];
    for (a, b) in landed.iter().zip(expect) {
        assert_abs_diff_eq!(*a, b, epsilon = 1e-10);
    }
}

#[test]
fn particle_reference_grows_linearly_along_flow() {
    let model = make_relativistic_particle(RelativisticParticleParams { d: 3, m: 2.0 }).unwrap();
    let frame = model.model.frame(TIME_FRAME, vec![unit()]).unwrap();
    let z = frame.embed(0.3, &[0.1, -0.2, 0.4, -1.0, 0.5, 0.2]).unwrap();
    let xi = frame.split().x(0);
    let g = 0.7;
    let gen = FlowGenerator::new(frame.template().constraints.clone(), vec![g]).unwrap();
    for s in [-1.5, 0.25, 2.0] {
        let moved = flow(&gen, &z, s, &FlowOptions::default()).unwrap();
        assert_abs_diff_eq!(moved[xi] - z[xi], g * s, epsilon = 1e-10);
        assert!(constraint_residual(frame.constraints(), &moved).unwrap() <= 10.0 * FlowOptions::default().atol);
    }
}

#[test]
fn zero_generator_is_identity() {
    let toy = make_linear_toy(unit(), unit());
    let frame = toy.frame().unwrap();
    let z = frame.complete(&[0.4, -1.2, 3.0, 0.0]).unwrap();
    let gen = FlowGenerator::new(frame.template().constraints.clone(), vec![0.0]).unwrap();
    assert_eq!(flow(&gen, &z, 5.0, &FlowOptions::default()).unwrap(), z);
}

#[test]
fn toy_flow_is_a_straight_line() {
    let toy = make_linear_toy(unit(), unit());
    let frame = toy.frame().unwrap();
    let z = frame.complete(&[0.4, -1.2, 3.0, 0.0]).unwrap();
    let c = -0.6;
    let gen = FlowGenerator::new(frame.template().constraints.clone(), vec![c]).unwrap();
    let moved = flow(&gen, &z, 2.5, &FlowOptions::default()).unwrap();
    let split = frame.split();
    assert_abs_diff_eq!(moved[split.q(0)], 0.4 + c * 2.5, epsilon = 1e-12);
    assert_abs_diff_eq!(moved[split.x(0)], 3.0 + c * 2.5, epsilon = 1e-12);
    assert_eq!(moved[split.p(0)], -1.2);
    assert_eq!(moved[split.y(0)], z[split.y(0)]);

    let trace = trace_orbit(&frame, &z, (-1.0, 1.0), 9, &FlowOptions::default()).unwrap();
    assert!(trace.truncated.is_none());
    for (s, w) in &trace.samples {
        assert_abs_diff_eq!(w[split.q(0)] - w[split.x(0)], 0.4 - 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w[split.x(0)], 3.0 + s, epsilon = 1e-12);
    }
    let single = trace_orbit(&frame, &z, (0.0, 1.0), 1, &FlowOptions::default()).unwrap();
    assert_eq!(single.samples.len(), 1);
    assert_eq!(single.samples[0].1, z);
}

#[test]
fn kepler_landing_and_orbit_follow_the_conic() {
    let model = make_kepler(KeplerParams::default()).unwrap();
    let frame = model.model.frame(ANGULAR_FRAME, vec![unit()]).unwrap();
    let (r, p, phi) = (2.0, -0.3, 0.1);
    let z = frame.complete(&[r, p, phi, 0.0]).unwrap();
    let l = z[frame.split().y(0)];
    let t = 0.6;
    let landed = flow_to_cut(&frame, t, &z, &FlowOptions::default()).unwrap();
    assert_abs_diff_eq!(landed[frame.split().x(0)], t, epsilon = 1e-10);
    assert_abs_diff_eq!(landed[0], model.oracle_shape(r, p, phi, t).unwrap(), epsilon = 1e-8);

    let trace = trace_orbit(&frame, &z, (-0.4, 0.4), 17, &FlowOptions::default()).unwrap();
    for ((_, w), res) in trace.samples.iter().zip(&trace.residuals) {
        assert_abs_diff_eq!(w[3], l, epsilon = 1e-12);
        assert_abs_diff_eq!(w[0], model.oracle_shape(r, p, phi, w[2]).unwrap(), epsilon = 1e-7);
        assert!(*res <= 1e-7);
    }
}

#[test]
fn kepler_frame_equivalence_rejects_orbits_escaping_before_the_sweep() {
    let fast = make_kepler(KeplerParams {
        energy: 0.5,
        ..KeplerParams::default()
    })
    .unwrap();
    let r = verify::kepler_frame_equivalence(&fast, -1.0, 0.9, 2.0, 11, &FlowOptions::default());
    assert!(matches!(r, Err(GaugeError::InvalidArgument(_))), "{r:?}");
}

#[test]
fn polar_energy_model_reproduces_kepler() {
    let kepler = make_kepler(KeplerParams {
        m: 1.3,
        alpha: 0.8,
        energy: 0.4,
    })
    .unwrap();
    let energy = make_energy_constrained(
        2,
        Metric::Polar { mass: 1.3 },
        Potential::Coulomb { alpha: 0.8 },
        0.4,
        &[(1, Sign::Negative)],
    )
    .unwrap();
    let a = kepler.model.frame(ANGULAR_FRAME, vec![GaugeClock::linear(0.0, 1.5)]).unwrap();
    let b = energy.model.frame(&frame_name(1), vec![GaugeClock::linear(0.0, 1.5)]).unwrap();
    for (r, p) in [(1.0, 0.2), (2.5, -0.4), (0.7, 0.0)] {
        let ha = reduced_hamiltonian(&a, 0.3, &[r, p]).unwrap();
        let hb = reduced_hamiltonian(&b, 0.3, &[r, p]).unwrap();
        assert_abs_diff_eq!(ha, hb, epsilon = 1e-10);
        assert_abs_diff_eq!(ha, 1.5 * kepler.h(r, p).unwrap(), epsilon = 1e-12);
    }
}

#[test]
fn energy_oscillator_suite_passes() {
    let model = make_energy_constrained(
        3,
        Metric::Diagonal {
            entries: vec![1.0, 2.0, 0.5],
        },
        Potential::Harmonic { omega: 0.7 },
        1.5,
        &[(0, Sign::Positive), (2, Sign::Negative)],
    )
    .unwrap();
    for slot in [0, 2] {
        let frame = model.model.frame(&frame_name(slot), vec![unit()]).unwrap();
        let checks = verify::energy_checks(&model, &frame, &SuiteOptions::default()).unwrap();
        for c in &checks {
            assert!(c.pass, "slot {slot}: {c:?}");
        }
    }
}

#[test]
fn lattice_suite_passes_in_two_dimensions() {
    let model = make_lattice_pft(LatticePftParams {
        d: 2,
        n: 40,
        dz: 0.25,
        mu: 0.5,
    })
    .unwrap();
    let packet = Packet {
        amplitude: 0.5,
        sigma: 0.6,
        center: 0.2,
    };
    let checks = verify::lattice_checks(&model, &packet, 0.05, &SuiteOptions::default()).unwrap();
    assert!(checks.iter().any(|c| c.name == "bracket_rotation_h"));
    for c in &checks {
        assert!(c.pass, "{c:?}");
    }
    let identities = checks.iter().find(|c| c.name == "embedding_identities").unwrap();
    assert!(identities.max_error <= 1e-12);
}

#[test]
fn static_packet_boost_scales_energy_by_cosh() {
    let model = make_lattice_pft(LatticePftParams {
        d: 1,
        n: 128,
        dz: 0.1,
        mu: 1.0,
    })
    .unwrap();
    let mut config = model.gaussian_packet(1.0, 0.8, &[0.0]);
    let ns = model.sites();
    config[ns..].iter_mut().for_each(|pi| *pi = 0.0);
    let gens = pft_generators(&model);
    assert_eq!(gens.p_momentum.eval(&config).unwrap(), 0.0);
    let h = gens.h.eval(&config).unwrap();
    let s0 = 0.1;
    let report = verify_boost_hamiltonian(&model, s0, &config, &FlowOptions::with_tolerances(1e-12, 1e-14)).unwrap();
    assert_abs_diff_eq!(report.h_expected, s0.cosh() * h, epsilon = 1e-14);
    assert!(report.rel_deviation < 1e-2, "{report:?}");

    let still = verify_boost_hamiltonian(&model, 0.0, &config, &FlowOptions::default()).unwrap();
    assert_eq!(still.abs_deviation, 0.0);
}

#[test]
fn packet_at_the_boundary_is_rejected() {
    let model = make_lattice_pft(LatticePftParams::default()).unwrap();
    let config = model.gaussian_packet(1.0, 0.8, &[6.0]);
    assert!(matches!(model.check_support(&config), Err(GaugeError::SupportEscape(_))));
}

/// The discretised constraints commute only up to `O(dz²)`: the bracket
/// of two smeared constraints vanishes at second order under refinement.
#[test]
fn lattice_constraint_algebra_closes_at_second_order() {
    let mut dzs = Vec::new();
    let mut brackets = Vec::new();
    for (n, dz) in [(37, 0.25), (73, 0.125), (145, 0.0625)] {
        let model = make_lattice_pft(LatticePftParams { d: 1, n, dz, mu: 0.5 }).unwrap();
        let frame = model.inertial_frame(&model.identity_lorentz()).unwrap();
        let z = frame.embed(0.0, &model.gaussian_packet(0.3, 1.0, &[0.0])).unwrap();
        let ns = model.sites();
        let bump = |i: usize, c: f64| (-(model.lattice.coordinate(i, 0) - c).powi(2)).exp();
        let n_smear: Vec<f64> = (0..2 * ns).map(|k| if k < ns { bump(k, 0.3) } else { 0.0 }).collect();
        let m_smear: Vec<f64> = (0..2 * ns).map(|k| if k >= ns { bump(k - ns, -0.4) } else { 0.0 }).collect();
        let sys = frame.constraints();
        let gn = sys.generator_grad(&n_smear, &z).unwrap();
        let gm = sys.generator_grad(&m_smear, &z).unwrap();
        dzs.push(dz);
        brackets.push(frame.split().bracket_from_gradients(&gn, &gm).abs());
    }
    let order = convergence_order(&dzs, &brackets);
    assert!((order - 2.0).abs() < 0.3, "order {order}, brackets {brackets:?}");
}

#[test]
fn inertial_frames_share_the_energy_density() {
    let model = make_lattice_pft(LatticePftParams {
        d: 1,
        n: 64,
        dz: 0.2,
        mu: 0.3,
    })
    .unwrap();
    let config = model.gaussian_packet(0.8, 1.0, &[0.5]);
    let h = pft_generators(&model).h.eval(&config).unwrap();
    for rapidity in [-0.4, 0.0, 0.7] {
        let frame = model.inertial_frame(&model.boost(rapidity)).unwrap();
        let hs = reduced_hamiltonian(&frame, 0.0, &config).unwrap();
        assert_abs_diff_eq!(hs, h, epsilon = 1e-10 * h.abs().max(1.0));
    }
    let z = PhasePoint::new(model.true_split().clone(), config).unwrap();
    assert_eq!(z.len(), 2 * model.sites());
}

#[test]
fn toy_evolve_rows_form_an_arithmetic_progression() {
    let scenario = gaugeframe::scenario::parse_scenario(
        "[model]\nkind = \"toy\"\n\n[[frames]]\nname = \"x\"\n\n[run]\ncommand = \"evolve\"\ninitial = [0.5, 1.0]\nsamples = 11\n",
    )
    .unwrap();
    let model = gaugeframe::run::build_model(&scenario).unwrap();
    let csv = gaugeframe::run::evolve_csv(&scenario, &model).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(csv.lines().next().unwrap(), "t,q,p");
    assert_eq!(rows.len(), 11);
    for (j, row) in rows.iter().enumerate() {
        assert_abs_diff_eq!(row[1], 0.5 + 0.1 * j as f64, epsilon = 1e-12);
        assert_eq!(row[2], 1.0);
    }
}
