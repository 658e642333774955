//! Integrator accuracy against closed forms and a high-accuracy self-oracle,
//! plus conservation and reversibility properties.

use proptest::prelude::*;

use lawforge_core::engine::{run_experiment_with, ExperimentSpec, Payload};
use lawforge_core::forcelaws::catalog::lookup;
use lawforge_core::forcelaws::{ForceField, LawKind, LawSpec};
use lawforge_core::integrators::{integrate_to_times, step_by, IntegratorChoice, Scheme};
use lawforge_core::{ChargeVector, ParticleState, Vec2};

fn spring(states: &[ParticleState], _t: f64, out: &mut [Vec2]) {
    for (a, s) in out.iter_mut().zip(states) {
        *a = s.position * -1.0;
    }
}

fn oscillator_error(h: f64) -> f64 {
    let start = [ParticleState::new(Vec2::new(1.0, 0.0), Vec2::ZERO, ChargeVector::probe(1.0), 1.0)];
    let end = integrate_to_times(&start, &mut spring, &[10.0], &IntegratorChoice::fixed(Scheme::Yoshida4, h), 0.0)
        .unwrap();
    (end[0][0].position - Vec2::new(10f64.cos(), 0.0)).norm()
}

#[test]
fn yoshida4_halving_the_step_shrinks_oscillator_error_sixteenfold() {
    let ratio = oscillator_error(0.1) / oscillator_error(0.05);
    assert!((12.0..=20.0).contains(&ratio), "error ratio {ratio}");
}

#[test]
fn leapfrog_step_in_uniform_field() {
    let a = Vec2::new(0.3, -1.2);
    let mut uniform = |_: &[ParticleState], _: f64, out: &mut [Vec2]| out.fill(a);
    let start = [ParticleState::new(Vec2::new(1.0, 2.0), Vec2::new(-0.5, 0.25), ChargeVector::probe(1.0), 1.0)];
    let h = 0.1;
    let next = step_by(&start, &mut uniform, 0.0, h, Scheme::Leapfrog).unwrap();
    assert!((next[0].velocity - (start[0].velocity + a * h)).norm() < 1e-15);
    let closed = start[0].position + start[0].velocity * h + a * (0.5 * h * h);
    assert!((next[0].position - closed).norm() <= h * h * 1e-10);
}

#[test]
fn gravity_probe_agrees_with_tight_adaptive_reference() {
    let world = lookup("gravity").unwrap();
    let spec = ExperimentSpec::new(
        Payload::TwoParticle {
            p1: 1.0,
            p2: 1.0,
            pos2: Vec2::new(10.0, 0.0),
            vel2: Vec2::ZERO,
        },
        vec![0.1],
    );
    let default = run_experiment_with(&world, &spec, 0, &world.integrator_choice()).unwrap();
    let reference = run_experiment_with(&world, &spec, 0, &IntegratorChoice::adaptive(1e-12, 1e-12)).unwrap();
    let start = Vec2::new(10.0, 0.0);
    let moved = default[1].position - start;
    let moved_ref = reference[1].position - start;
    assert!(moved.x < 0.0, "probe must fall toward the source");
    assert!((moved - moved_ref).norm() < 1e-6);
}

#[test]
fn time_equal_to_start_returns_initial_state() {
    let start = [ParticleState::new(Vec2::new(1.0, 2.0), Vec2::new(3.0, 4.0), ChargeVector::probe(1.0), 1.0)];
    for scheme in Scheme::FIXED {
        let out = integrate_to_times(&start, &mut spring, &[2.5], &IntegratorChoice::fixed(scheme, 1e-2), 2.5).unwrap();
        assert_eq!(out, vec![start.to_vec()]);
    }
}

fn coulomb_pair(x: f64, vy: f64, m0: f64, m1: f64) -> Vec<ParticleState> {
    vec![
        ParticleState::new(Vec2::ZERO, Vec2::new(0.0, -vy * m1 / m0), ChargeVector::symmetric(1.0), m0),
        ParticleState::new(Vec2::new(x, 0.0), Vec2::new(0.0, vy), ChargeVector::symmetric(1.0), m1),
    ]
}

fn scheme() -> impl Strategy<Value = Scheme> {
    prop::sample::select(Scheme::FIXED.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn total_momentum_is_conserved(
        scheme in scheme(),
        x in 0.5..3.0f64, vy in 0.1..1.0f64,
        m0 in 0.5..3.0f64, m1 in 0.5..3.0f64,
    ) {
        let field = ForceField::new(&LawSpec::new(LawKind::Coulomb).with_param("k", 1.0), &[], 1e-3).unwrap();
        let mut accel = |s: &[ParticleState], t: f64, out: &mut [Vec2]| {
            for (i, a) in out.iter_mut().enumerate() {
                *a = field.acceleration_on(s, i, t);
            }
        };
        let start = coulomb_pair(x, vy, m0, m1);
        let out = integrate_to_times(&start, &mut accel, &[0.5, 1.0], &IntegratorChoice::fixed(scheme, 1e-3), 0.0).unwrap();
        for snap in out {
            let p = snap.iter().fold(Vec2::ZERO, |acc, s| acc + s.velocity * s.inertia);
            prop_assert!(p.norm() < 1e-10, "momentum {:?}", p);
        }
    }

    #[test]
    fn symmetric_schemes_are_time_reversible(
        x in 0.5..3.0f64, vy in 0.1..1.0f64, h in 1e-3..5e-2f64,
    ) {
        let field = ForceField::new(&LawSpec::new(LawKind::LogGravity), &[], 1e-3).unwrap();
        let mut accel = |s: &[ParticleState], t: f64, out: &mut [Vec2]| {
            for (i, a) in out.iter_mut().enumerate() {
                *a = field.acceleration_on(s, i, t);
            }
        };
        let start = coulomb_pair(x, vy, 1.0, 1.0);
        for scheme in [Scheme::Leapfrog, Scheme::Yoshida4, Scheme::Yoshida6] {
            let forward = step_by(&start, &mut accel, 0.0, h, scheme).unwrap();
            let back = step_by(&forward, &mut accel, h, -h, scheme).unwrap();
            for (a, b) in start.iter().zip(&back) {
                prop_assert!((a.position - b.position).norm() < 1e-12);
                prop_assert!((a.velocity - b.velocity).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn one_snapshot_per_requested_time(
        scheme in scheme(),
        mut times in prop::collection::vec(0.01..3.0f64, 1..8),
        start in 0.0..1.0f64,
    ) {
        times.sort_by(f64::total_cmp);
        times.dedup();
        let times: Vec<f64> = times.into_iter().map(|t| t + start).collect();
        let initial = [ParticleState::new(Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), ChargeVector::probe(1.0), 1.0)];
        let out = integrate_to_times(&initial, &mut spring, &times, &IntegratorChoice::fixed(scheme, 7e-3), start).unwrap();
        prop_assert_eq!(out.len(), times.len());
        let tolerance = if scheme.order() == 1 { 5e-2 } else { 1e-3 };
        for (snap, t) in out.iter().zip(&times) {
            // The unit spring started at (1, 0) with velocity (0, 1) stays on the unit circle.
            let offset = t - start;
            prop_assert!((snap[0].position - Vec2::new(offset.cos(), offset.sin())).norm() < tolerance);
        }
    }
}
