//! Experiment execution, observation noise, the trajectory log and replay verification.

use proptest::prelude::*;

use lawforge_core::engine::{
    assemble, inject_noise, read_log, run_experiment, ExperimentSpec, Payload, ProbeInit, TrajectoryLog, WorldField,
};
use lawforge_core::forcelaws::catalog::{lookup, WORLD_NAMES};
use lawforge_core::protocol::{
    process_evaluator_factory, sample_random_experiment, verify_log, Action, Session, SessionConfig,
    REPLAY_SIGMA_BOUND,
};
use lawforge_core::lawrunner::RunnerLimits;
use lawforge_core::{NoiseMode, Vec2, WorldDefinition};

fn probes_at(points: &[(f64, f64)]) -> Payload {
    Payload::Probes {
        probes: points
            .iter()
            .map(|&(x, y)| ProbeInit {
                position: Vec2::new(x, y),
                velocity: Vec2::ZERO,
            })
            .collect(),
    }
}

#[test]
fn coulomb_probe_short_time_displacement() {
    let world = lookup("coulomb_easy").unwrap();
    let spec = ExperimentSpec::new(
        Payload::TwoParticle {
            p1: 4.0,
            p2: 1.0,
            pos2: Vec2::new(10.0, 0.0),
            vel2: Vec2::ZERO,
        },
        vec![0.1],
    );
    let samples = run_experiment(&world, &spec, 1).unwrap();
    let moved = samples[1].position - Vec2::new(10.0, 0.0);
    // a = k p1 p2 / r² = 0.04 toward the source, so Δx ≈ −½ a t².
    assert!((moved.x + 2.0e-4).abs() < 1e-6, "dx = {}", moved.x);
    assert!(moved.y.abs() < 1e-12);
}

#[test]
fn measuring_at_the_start_time_returns_initial_conditions() {
    for name in WORLD_NAMES {
        let world = lookup(name).unwrap();
        let spec = world.held_out.cases[0].experiment.clone();
        let spec = ExperimentSpec::new(spec.payload, vec![3.0]).starting_at(3.0);
        let samples = run_experiment(&world, &spec, 1).unwrap();
        let assembly = assemble(&world, &spec);
        assert_eq!(samples.len(), assembly.exposed.len());
        for (s, &i) in samples.iter().zip(&assembly.exposed) {
            assert_eq!(s.position, assembly.particles[i].position, "{name}");
            assert_eq!(s.velocity, assembly.particles[i].velocity, "{name}");
        }
    }
}

fn probe_acceleration(world: &WorldDefinition, at: Vec2) -> Vec2 {
    let spec = ExperimentSpec::new(
        probes_at(&[(at.x, at.y), (30.0, 30.0), (-30.0, 30.0), (30.0, -30.0), (-30.0, -30.0)]),
        vec![1.0],
    );
    let assembly = assemble(world, &spec);
    let field = WorldField::new(world, assembly.pinned.clone()).unwrap();
    let mut out = vec![Vec2::ZERO; assembly.particles.len()];
    field.fill(&assembly.particles, 0.0, &mut out);
    out[assembly.exposed[world.visible_count]]
}

#[test]
fn dark_matter_probe_feels_more_than_the_visible_sources() {
    let world = lookup("dark_matter").unwrap();
    let mut visible_only = world.clone();
    visible_only.roster.truncate(world.visible_count);
    // Between the visible cluster (radius 4) and the hidden ring (radius 8), on the
    // line toward the first hidden source. A uniform ring pulls nothing inside it,
    // so the excess is a near-field effect and the probe sits close to the ring.
    let toward = world.roster[world.visible_count].position;
    let at = toward * (7.0 / toward.norm());
    let full = probe_acceleration(&world, at);
    let visible = probe_acceleration(&visible_only, at);
    let excess = (full - visible).norm() / visible.norm();
    assert!(excess > 0.1, "relative excess {excess}");
}

#[test]
fn noise_is_deterministic_per_seed() {
    let world = lookup("three_species").unwrap();
    let spec = world.held_out.cases[0].experiment.clone();
    let clean = run_experiment(&world, &spec, 1).unwrap();
    let a = inject_noise(&clean, &world.noise, 42);
    let b = inject_noise(&clean, &world.noise, 42);
    let c = inject_noise(&clean, &world.noise, 43);
    assert_eq!(a, b);
    assert_ne!(a, c);
    let mut silent = world.noise;
    silent.level = 0.0;
    let untouched = inject_noise(&clean, &silent, 42);
    assert_eq!(untouched, clean);
    assert!(untouched.iter().all(|s| !s.noisy));
}

#[test]
fn position_and_velocity_mode_perturbs_velocities() {
    let world = lookup("gravity").unwrap();
    let spec = world.held_out.cases[0].experiment.clone();
    let clean = run_experiment(&world, &spec, 1).unwrap();
    let mut noise = world.noise;
    noise.mode = NoiseMode::PositionAndVelocity;
    let noisy = inject_noise(&clean, &noise, 1);
    assert!(clean.iter().zip(&noisy).all(|(c, n)| c.velocity != n.velocity));
}

fn session_with_experiments(world: &str, noise_level: f64, dir: &std::path::Path) -> Session {
    let mut world = lookup(world).unwrap();
    world.noise.level = noise_level;
    let log = TrajectoryLog::persistent("replay", dir.join("log.csv")).unwrap();
    let mut config = SessionConfig::new("replay", 5);
    config.round_budget = 4;
    let mut session =
        Session::with_log(world, config, process_evaluator_factory(RunnerLimits::default()), log).unwrap();
    let mut rng = rand::rng();
    for _ in 0..3 {
        let spec = sample_random_experiment(session.world(), &session.world().randomized, &mut rng);
        session.advance(Action::RunExperiment(Some(spec))).unwrap();
    }
    session
}

#[test]
fn persisted_log_reads_back_equal() {
    let dir = tempfile::tempdir().unwrap();
    let session = session_with_experiments("three_species", 0.05, dir.path());
    let read = read_log(&dir.path().join("log.csv")).unwrap();
    assert_eq!(read.rows, session.state().log.rows);
    assert_eq!(read.experiment_count, 3);
}

#[test]
fn pristine_noisy_log_replays_clean_within_the_sigma_bound() {
    let dir = tempfile::tempdir().unwrap();
    let session = session_with_experiments("dark_matter", 0.05, dir.path());
    let log = read_log(&dir.path().join("log.csv")).unwrap();
    let verdict = verify_log(session.world(), session.specs(), &log);
    assert!(verdict.is_clean(), "{}", verdict.render());
    assert_eq!(verdict.rows_checked, log.rows.len());
    assert!(verdict.max_sigma < REPLAY_SIGMA_BOUND);
}

#[test]
fn noise_free_log_replays_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let session = session_with_experiments("ether", 0.0, dir.path());
    let verdict = verify_log(session.world(), session.specs(), &session.state().log);
    assert!(verdict.is_clean(), "{}", verdict.render());
    assert_eq!(verdict.max_sigma, 0.0);
}

#[test]
fn tampered_row_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let session = session_with_experiments("gravity", 0.05, dir.path());
    let mut log = session.state().log.clone();
    let target = log.rows.len() / 2;
    log.rows[target].position.x += 10.0;
    let verdict = verify_log(session.world(), session.specs(), &log);
    assert_eq!(verdict.divergent.len(), 1, "{}", verdict.render());
    assert_eq!(verdict.divergent[0].row, target + 1);
    assert!(verdict.render().contains(&format!("row {}", target + 1)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn identical_inputs_give_bit_identical_samples(seed in any::<u64>(), world_index in 0..WORLD_NAMES.len()) {
        let world = lookup(WORLD_NAMES[world_index]).unwrap();
        let spec = world.held_out.cases[0].experiment.clone();
        let spec = ExperimentSpec::new(spec.payload, vec![0.25, 0.5]);
        let a = inject_noise(&run_experiment(&world, &spec, 1).unwrap(), &world.noise, seed);
        let b = inject_noise(&run_experiment(&world, &spec, 1).unwrap(), &world.noise, seed);
        prop_assert_eq!(a.len(), world.exposed_count() * 2);
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.position.x.to_bits(), y.position.x.to_bits());
            prop_assert_eq!(x.position.y.to_bits(), y.position.y.to_bits());
        }
    }
}
