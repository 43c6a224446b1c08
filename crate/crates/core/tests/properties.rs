use std::sync::Arc;

use proptest::prelude::*;

use gaugeframe::flow::{flow, FlowGenerator, FlowOptions};
use gaugeframe::gauge::{BranchSigns, ConstraintSystem, GaugeClock};
use gaugeframe::models::particle::TIME_FRAME;
use gaugeframe::models::{make_linear_toy, make_relativistic_particle, RelativisticParticleParams};
use gaugeframe::phase::{poisson_bracket, CoordinateSplit, FnField, PhasePoint, ScalarField};
use gaugeframe::rrft::{apply_rrft, invert_rrft, FrameMap, FramePair};
use gaugeframe::scenario::{parse_scenario, serialize_scenario};

fn split() -> Arc<CoordinateSplit> {
    Arc::new(CoordinateSplit::with_default_labels(1, 1))
}

/// `a·q·p + b·q² + c·p³ + d·x·y` on `(q, p, x, y)`.
fn cubic(k: [f64; 4]) -> FnField {
    let [a, b, c, d] = k;
    FnField::new("cubic", move |z: &[f64]| {
        Ok(a * z[0] * z[1] + b * z[0] * z[0] + c * z[1].powi(3) + d * z[2] * z[3])
    })
    .with_grad(move |z: &[f64]| {
        Ok(vec![
            a * z[1] + 2.0 * b * z[0],
            a * z[0] + 3.0 * c * z[1] * z[1],
            d * z[3],
            d * z[2],
        ])
    })
}

/// `{f, g}` as a field, differentiated numerically by the caller.
fn bracket_field(f: Arc<dyn ScalarField>, g: Arc<dyn ScalarField>) -> FnField {
    let s = split();
    FnField::new("bracket", move |z: &[f64]| {
        poisson_bracket(f.as_ref(), g.as_ref(), &PhasePoint::new(s.clone(), z.to_vec())?)
    })
}

fn coeffs() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-2.0..2.0f64)
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5..1.5f64, 4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bracket_is_antisymmetric(kf in coeffs(), kg in coeffs(), z in point()) {
        let z = PhasePoint::new(split(), z).unwrap();
        let (f, g) = (cubic(kf), cubic(kg));
        let fg = poisson_bracket(&f, &g, &z).unwrap();
        let gf = poisson_bracket(&g, &f, &z).unwrap();
        prop_assert!((fg + gf).abs() <= 1e-12 * (1.0 + fg.abs()));
    }

    #[test]
    fn jacobi_identity(kf in coeffs(), kg in coeffs(), kh in coeffs(), z in point()) {
        let z = PhasePoint::new(split(), z).unwrap();
        let f: Arc<dyn ScalarField> = Arc::new(cubic(kf));
        let g: Arc<dyn ScalarField> = Arc::new(cubic(kg));
        let h: Arc<dyn ScalarField> = Arc::new(cubic(kh));
        let term = |a: &Arc<dyn ScalarField>, b: &Arc<dyn ScalarField>, c: &Arc<dyn ScalarField>| {
            poisson_bracket(a.as_ref(), &bracket_field(b.clone(), c.clone()), &z).unwrap()
        };
        let terms = [term(&f, &g, &h), term(&g, &h, &f), term(&h, &f, &g)];
        let scale = 1.0 + terms.iter().map(|t| t.abs()).fold(0.0, f64::max);
        prop_assert!(terms.iter().sum::<f64>().abs() <= 1e-7 * scale, "{terms:?}");
    }

    #[test]
    fn flow_parameters_compose(q in -2.0..2.0f64, p in -3.0..-0.1f64, s1 in -1.0..1.0f64, s2 in -1.0..1.0f64) {
        let model = make_relativistic_particle(RelativisticParticleParams { d: 1, m: 1.0 }).unwrap();
        let frame = model.model.frame(TIME_FRAME, vec![GaugeClock::linear(0.0, 1.0)]).unwrap();
        let z = frame.embed(0.0, &[q, p]).unwrap();
        let gen = FlowGenerator::unit(frame.template().constraints.clone(), 0).unwrap();
        let opts = FlowOptions::default();
        let stepwise = flow(&gen, &flow(&gen, &z, s1, &opts).unwrap(), s2, &opts).unwrap();
        let direct = flow(&gen, &z, s1 + s2, &opts).unwrap();
        for (a, b) in stepwise.iter().zip(direct.iter()) {
            prop_assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn toy_transformation_round_trips(q in -3.0..3.0f64, p in -3.0..3.0f64, t in -1.0..1.0f64, t_hat in -1.0..1.0f64) {
        let toy = make_linear_toy(GaugeClock::linear(0.1, 1.0), GaugeClock::linear(0.0, -0.5));
        let pair = Arc::new(FramePair::new(toy.frame().unwrap(), toy.frame_hat().unwrap()).unwrap());
        let map = FrameMap::new(pair, t, t_hat);
        let image = apply_rrft(&map, &[q, p]).unwrap();
        let back = apply_rrft(&invert_rrft(&map), &image).unwrap();
        prop_assert!((back[0] - q).abs() <= 1e-9 && (back[1] - p).abs() <= 1e-9);
    }
}

/// Two deparametrised constraints on one true pair, `y₁ + p²/2` and
/// `y₂ + p·x₂`, which commute strongly.
struct Abelian {
    split: Arc<CoordinateSplit>,
    branch: BranchSigns,
}

impl ConstraintSystem for Abelian {
    fn split(&self) -> &Arc<CoordinateSplit> {
        &self.split
    }

    fn branch(&self) -> &BranchSigns {
        &self.branch
    }

    fn h(&self, index: usize, z: &[f64]) -> gaugeframe::Result<f64> {
        Ok(match index {
            0 => 0.5 * z[1] * z[1],
            _ => z[1] * z[self.split.x(1)],
        })
    }

    fn raw(&self, index: usize, z: &[f64]) -> gaugeframe::Result<f64> {
        Ok(z[self.split.y(index)] + self.h(index, z)?)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn commuting_flows_commute(
        z in prop::collection::vec(-1.0..1.0f64, 6),
        g1 in prop::collection::vec(-1.0..1.0f64, 2),
        g2 in prop::collection::vec(-1.0..1.0f64, 2),
    ) {
        let sys: Arc<dyn ConstraintSystem> = Arc::new(Abelian {
            split: Arc::new(CoordinateSplit::with_default_labels(1, 2)),
            branch: BranchSigns::new(vec![None, None]),
        });
        let z = PhasePoint::new(sys.split().clone(), z).unwrap();
        let a = FlowGenerator::new(sys.clone(), g1).unwrap();
        let b = FlowGenerator::new(sys, g2).unwrap();
        let opts = FlowOptions::default();
        let ab = flow(&b, &flow(&a, &z, 1.0, &opts).unwrap(), 1.0, &opts).unwrap();
        let ba = flow(&a, &flow(&b, &z, 1.0, &opts).unwrap(), 1.0, &opts).unwrap();
        for (u, v) in ab.iter().zip(ba.iter()) {
            prop_assert!((u - v).abs() <= 10.0 * (opts.atol + opts.rtol * v.abs()) + 1e-9);
        }
    }
}

fn scenario_text() -> impl Strategy<Value = String> {
    let model = prop_oneof![
        (1usize..4, 0.1..5.0f64).prop_map(|(d, m)| format!("kind = \"particle\"\nd = {d}\nm = {m:?}\n")),
        (0.1..3.0f64, 0.1..3.0f64, -0.9..2.0f64)
            .prop_map(|(m, a, e)| format!("kind = \"kepler\"\nm = {m:?}\nalpha = {a:?}\nE = {e:?}\n")),
        Just("kind = \"toy\"\n".to_string()),
    ];
    (
        model,
        -5.0..5.0f64,
        0.1..4.0f64,
        -2.0..2.0f64,
        1usize..40,
        0..=i64::MAX as u64,
        prop::option::of(1e-12..1e-3f64),
        prop::collection::vec(-3.0..3.0f64, 2),
    )
        .prop_map(|(model, offset, rate, t0, samples, seed, tol, initial)| {
            let frames = if model.contains("particle") {
                ["K0", "K1"]
            } else if model.contains("kepler") {
                ["phi", "r"]
            } else {
                ["x", "q"]
            };
            let tol = tol.map(|t| format!("tol = {t:?}\n")).unwrap_or_default();
            format!(
                "[model]\n{model}\n[[frames]]\nname = \"{}\"\nclock = {{ kind = \"linear\", offset = {offset:?}, rate = {rate:?} }}\n\n\
                 [[frames]]\nname = \"{}\"\nclock = {{ kind = \"polynomial\", coefficients = [1.0, {rate:?}, 0.5] }}\n\n\
                 [run]\ncommand = \"evolve\"\nt0 = {t0:?}\nsamples = {samples}\ninitial = {initial:?}\n\n\
                 [numerics]\nseed = {seed}\n{tol}",
                frames[0], frames[1]
            )
        })
}

proptest! {
    #[test]
    fn scenario_serialization_round_trips(text in scenario_text()) {
        let s = parse_scenario(&text).unwrap();
        let again = parse_scenario(&serialize_scenario(&s)).unwrap();
        prop_assert_eq!(s, again);
    }
}
