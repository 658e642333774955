//! The public world catalog.
//!
//! Rosters, held-out suites and noise references are generated from fixed seeds,
//! so every build produces bit-identical worlds. Values the source material
//! leaves open are marked as artifact defaults in each world's `notes`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use super::{BodyForceSpec, LawKind, LawSpec};
use crate::engine::{
    assemble, ExperimentSpec, MassiveProbeInit, Payload, ProbeInit, RingSlot, WorldField,
};
use crate::evaluation::{suite_variance, HeldOutCase, HeldOutSuite};
use crate::integrators::Scheme;
use crate::protocol::RandomizedConfig;
use crate::types::{
    ChargeVector, NoiseConfig, NoiseMode, ParticleState, ProbeScalarRole, Topology, WorldDefinition,
};
use crate::vec2::Vec2;

/// Seed for held-out case generation.
pub const HELD_OUT_SEED: u64 = 0x4C46_4845_4C44_0001;
/// Seed for roster layouts (background particles, halo).
pub const ROSTER_SEED: u64 = 0x4C46_524F_5354_0001;

pub const WORLD_NAMES: [&str; 11] = [
    "gravity",
    "yukawa",
    "fractional",
    "circle",
    "three_species",
    "dark_matter",
    "ether",
    "hubble",
    "oscillator",
    "extra_dimensions",
    "coulomb_easy",
];

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_SOFTENING: f64 = 1e-3;
pub const DEFAULT_NOISE_LEVEL: f64 = 0.05;
/// Field strength of the anchor in the anchor-ring worlds.
pub const ANCHOR_CHARGE: f64 = 50.0;
const HELD_OUT_TIMES: [f64; 5] = [2.0, 4.0, 6.0, 8.0, 10.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("no world named '{0}'")]
    NotFound(String),
    #[error("world '{name}' is invalid: {}", problems.join("; "))]
    Invalid { name: String, problems: Vec<String> },
}

fn seeded(base: u64, name: &str) -> ChaCha20Rng {
    let mut h = base;
    for b in name.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01B3);
    }
    ChaCha20Rng::seed_from_u64(h)
}

fn probe_template(count: usize) -> Vec<ParticleState> {
    vec![ParticleState::at_rest(Vec2::ZERO, ChargeVector::probe(1.0), 1.0); count]
}

fn base_world(name: &str, topology: Topology, law: LawSpec) -> WorldDefinition {
    WorldDefinition {
        name: name.to_string(),
        topology,
        law,
        roster: Vec::new(),
        visible_count: 0,
        agent_slots: 0,
        agent_template: Vec::new(),
        species_table: Vec::new(),
        integrator: Scheme::Yoshida4,
        step_size: DEFAULT_STEP,
        softening: DEFAULT_SOFTENING,
        noise: NoiseConfig {
            level: DEFAULT_NOISE_LEVEL,
            mode: NoiseMode::PositionOnly,
            reference_std: 1.0,
        },
        probe_scalar: ProbeScalarRole::Inertia,
        ring_input: false,
        randomized: RandomizedConfig::default(),
        held_out: HeldOutSuite {
            world_name: name.to_string(),
            cases: Vec::new(),
            reference_variance: 1.0,
        },
        notes: vec![
            "integrator Yoshida4 with step 1e-3 and softening 1e-3 are artifact defaults".to_string(),
            "held-out suite and noise reference are generated from fixed seeds".to_string(),
        ],
    }
}

fn two_particle(name: &str, law: LawSpec, role: ProbeScalarRole) -> WorldDefinition {
    let mut w = base_world(name, Topology::TwoParticle, law);
    w.roster = vec![ParticleState::at_rest(Vec2::ZERO, ChargeVector::new(1.0, 0.0), 1.0)];
    w.visible_count = 1;
    w.agent_slots = 1;
    w.agent_template = probe_template(1);
    w.probe_scalar = role;
    w
}

/// Points in a disc of `radius`, kept at least `min_sep` apart.
fn scatter(rng: &mut ChaCha20Rng, count: usize, radius: f64, min_sep: f64) -> Vec<Vec2> {
    let mut points: Vec<Vec2> = Vec::with_capacity(count);
    while points.len() < count {
        let p = Vec2::new(rng.random_range(-radius..radius), rng.random_range(-radius..radius));
        if p.norm() <= radius && points.iter().all(|q| (*q - p).norm() >= min_sep) {
            points.push(p);
        }
    }
    points
}

fn three_species() -> WorldDefinition {
    let law = LawSpec::new(LawKind::SpeciesCoupled);
    let mut w = base_world("three_species", Topology::ProbeOnly, law);
    let mut rng = seeded(ROSTER_SEED, &w.name);
    w.roster = scatter(&mut rng, 30, 10.0, 1.5)
        .into_iter()
        .enumerate()
        .map(|(i, p)| ParticleState::at_rest(p, ChargeVector::symmetric(1.0).with_species(i % 3), 1.0))
        .collect();
    w.visible_count = 30;
    w.agent_slots = 5;
    w.agent_template = probe_template(5);
    w.species_table = vec![1.0, 3.0, -2.0];
    w.notes.push("background layout (disc of radius 10) is an artifact default".to_string());
    w
}

fn dark_matter() -> WorldDefinition {
    let law = LawSpec::new(LawKind::LogGravity);
    let mut w = base_world("dark_matter", Topology::ProbeOnly, law);
    let mut rng = seeded(ROSTER_SEED, &w.name);
    let charge = ChargeVector::symmetric(1.0);
    let mut roster: Vec<ParticleState> = scatter(&mut rng, 20, 4.0, 0.8)
        .into_iter()
        .map(|p| ParticleState::at_rest(p, charge, 1.0))
        .collect();
    for k in 0..10 {
        let jitter: f64 = rng.random_range(-0.25..0.25);
        let angle = 2.0 * PI * (k as f64 + jitter) / 10.0;
        roster.push(ParticleState::at_rest(Vec2::from_polar(8.0, angle), charge, 1.0));
    }
    w.roster = roster;
    w.visible_count = 20;
    w.agent_slots = 5;
    w.agent_template = probe_template(5);
    w.notes.push(
        "hidden sources sit on a jittered ring of radius 8 with the visible coupling; layout is an artifact default"
            .to_string(),
    );
    w
}

/// Anchor plus 20 orbiters on a ring of radius 5 with masses cycling 1, 2, 4.
fn anchor_ring(name: &str, body: BodyForceSpec, orbit_speed: f64) -> WorldDefinition {
    let law = LawSpec::new(LawKind::AnchorCentral).with_body_force(body);
    let mut w = base_world(name, Topology::AnchorRingProbes, law);
    w.species_table = vec![1.0, 2.0, 4.0];
    let mut roster = vec![ParticleState::at_rest(Vec2::ZERO, ChargeVector::new(ANCHOR_CHARGE, 0.0), 1.0)];
    for k in 0..20 {
        let angle = 2.0 * PI * k as f64 / 20.0;
        let mass = w.species_table[k % 3];
        let position = Vec2::from_polar(5.0, angle);
        let velocity = Vec2::from_polar(orbit_speed, angle).perp();
        roster.push(ParticleState::new(
            position,
            velocity,
            ChargeVector::probe(mass).with_species(k % 3),
            mass,
        ));
    }
    w.roster = roster;
    w.visible_count = 21;
    w.agent_slots = 5;
    w.agent_template = probe_template(5);
    w
}

fn circle() -> WorldDefinition {
    let law = LawSpec::new(LawKind::FractionalPower)
        .with_param("k", 1.0 / (2.0 * PI))
        .with_param("alpha", 0.75);
    let mut w = base_world("circle", Topology::SymmetricMultiBody, law);
    w.roster = vec![ParticleState::at_rest(Vec2::ZERO, ChargeVector::symmetric(10.0), 10.0)];
    w.visible_count = 1;
    w.agent_slots = 10;
    w.agent_template = vec![ParticleState::at_rest(Vec2::ZERO, ChargeVector::symmetric(1.0), 1.0); 10];
    w.ring_input = true;
    w.notes.push(
        "alpha 0.75, k 1/(2π), center charge 10 and ring charge 1 are artifact defaults".to_string(),
    );
    w
}

fn build(name: &str) -> Option<WorldDefinition> {
    let tau = 2.0 * PI;
    let mut world = match name {
        "gravity" => two_particle(name, LawSpec::new(LawKind::LogGravity), ProbeScalarRole::Inertia),
        "yukawa" => {
            let mut w = two_particle(
                name,
                LawSpec::new(LawKind::Yukawa)
                    .with_param("amplitude", 1.0 / tau)
                    .with_param("lambda", 2.0),
                ProbeScalarRole::Inertia,
            );
            w.notes.push("amplitude 1/(2π) is an artifact default".to_string());
            w
        }
        "fractional" => {
            let mut w = two_particle(
                name,
                LawSpec::new(LawKind::FractionalPower)
                    .with_param("k", 1.0 / tau)
                    .with_param("alpha", 0.75),
                ProbeScalarRole::Inertia,
            );
            w.notes.push("alpha 0.75 and k 1/(2π) are artifact defaults".to_string());
            w
        }
        "circle" => circle(),
        "three_species" => three_species(),
        "dark_matter" => dark_matter(),
        "ether" => {
            let mut w = anchor_ring(
                name,
                BodyForceSpec::uniform_drift(Vec2::new(0.0, 0.05)),
                (ANCHOR_CHARGE / tau).sqrt(),
            );
            w.notes.push("drift acceleration 0.05 is an artifact default".to_string());
            w
        }
        "hubble" => {
            let h = 0.05;
            // Circular speed in the combined field at r = 5.
            let speed = (ANCHOR_CHARGE / tau - h * 25.0).sqrt();
            anchor_ring(name, BodyForceSpec::hubble_flow(h), speed)
        }
        "oscillator" => two_particle(
            name,
            LawSpec::new(LawKind::Oscillator)
                .with_param("G0", 5.0)
                .with_param("omega", PI / 2.0)
                .with_param("phase", 0.0),
            ProbeScalarRole::Inertia,
        ),
        "extra_dimensions" => {
            let mut w = two_particle(
                name,
                LawSpec::new(LawKind::ExtraDimensions)
                    .with_param("G", 1.0 / (4.0 * PI))
                    .with_param("L", 1.0)
                    .with_param("image_truncation", 50.0),
                ProbeScalarRole::Inertia,
            );
            w.notes.push("G 1/(4π) and L 1 are artifact defaults".to_string());
            w
        }
        "coulomb_easy" => two_particle(
            name,
            LawSpec::new(LawKind::Coulomb).with_param("k", 1.0),
            ProbeScalarRole::ResponseCharge,
        ),
        _ => return None,
    };
    world.held_out.cases = held_out_cases(&world);
    let variance = suite_variance(&world, &world.held_out.cases)
        .unwrap_or_else(|e| panic!("catalog world '{name}' has a broken held-out suite: {e}"));
    world.held_out.reference_variance = variance;
    world.noise.reference_std = variance.sqrt();
    Some(world)
}

/// Radial acceleration magnitude at the scored particle in `spec`'s initial state.
fn inward_acceleration(world: &WorldDefinition, spec: &ExperimentSpec, particle: usize) -> f64 {
    let assembly = assemble(world, spec);
    let field = WorldField::new(world, assembly.pinned.clone()).expect("catalog law compiles");
    let mut out = vec![Vec2::ZERO; assembly.particles.len()];
    field.fill(&assembly.particles, spec.start_time, &mut out);
    let index = assembly.exposed[particle];
    let r = assembly.particles[index].position;
    -(out[index].dot(r) / r.norm())
}

fn circular_speed(world: &WorldDefinition, spec: &ExperimentSpec, particle: usize, radius: f64) -> f64 {
    (radius * inward_acceleration(world, spec, particle).max(0.0)).sqrt()
}

fn held_out_cases(world: &WorldDefinition) -> Vec<HeldOutCase> {
    let mut rng = seeded(HELD_OUT_SEED, &world.name);
    let times = HELD_OUT_TIMES.to_vec();
    let count = world.topology.held_out_case_count();
    (0..count)
        .map(|i| {
            let (experiment, label) = match world.topology {
                Topology::TwoParticle => {
                    let p1 = rng.random_range(1.0..3.0);
                    let p2 = rng.random_range(0.5..2.0);
                    let r = rng.random_range(3.0..8.0);
                    let angle = rng.random_range(0.0..2.0 * PI);
                    let fraction = rng.random_range(0.6..1.0);
                    let pos2 = Vec2::from_polar(r, angle);
                    let at_rest = ExperimentSpec::new(
                        Payload::TwoParticle { p1, p2, pos2, vel2: Vec2::ZERO },
                        times.clone(),
                    );
                    let speed = fraction * circular_speed(world, &at_rest, 1, r);
                    let vel2 = Vec2::from_polar(speed, angle).perp();
                    (
                        ExperimentSpec::new(Payload::TwoParticle { p1, p2, pos2, vel2 }, times.clone()),
                        format!("r={r:.1}, v_t={speed:.2}"),
                    )
                }
                Topology::ProbeOnly => {
                    let probes = (0..world.agent_slots)
                        .map(|_| ProbeInit {
                            position: Vec2::from_polar(rng.random_range(3.0..12.0), rng.random_range(0.0..2.0 * PI)),
                            velocity: Vec2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)),
                        })
                        .collect();
                    (ExperimentSpec::new(Payload::Probes { probes }, times.clone()), format!("probe set {}", i + 1))
                }
                Topology::AnchorRingProbes => {
                    let masses = [1.0, 2.0, 4.0];
                    let mut probes: Vec<MassiveProbeInit> = (0..world.agent_slots)
                        .map(|_| MassiveProbeInit {
                            position: Vec2::from_polar(rng.random_range(3.0..12.0), rng.random_range(0.0..2.0 * PI)),
                            velocity: Vec2::ZERO,
                            mass: masses[rng.random_range(0..masses.len())],
                        })
                        .collect();
                    let at_rest = ExperimentSpec::new(Payload::MassiveProbes { probes: probes.clone() }, times.clone());
                    let first = world.visible_count;
                    for (k, probe) in probes.iter_mut().enumerate() {
                        let r = probe.position.norm();
                        let fraction = rng.random_range(0.7..1.1);
                        let speed = fraction * circular_speed(world, &at_rest, first + k, r).max(0.3);
                        probe.velocity = (probe.position * (speed / r)).perp();
                    }
                    (
                        ExperimentSpec::new(Payload::MassiveProbes { probes }, times.clone()),
                        format!("probe set {}", i + 1),
                    )
                }
                Topology::SymmetricMultiBody => {
                    let ring = (0..world.agent_slots)
                        .map(|_| RingSlot {
                            radius: rng.random_range(3.0..8.0),
                            tangential_speed: rng.random_range(0.2..1.0),
                        })
                        .collect();
                    (ExperimentSpec::new(Payload::Ring { ring }, times.clone()), format!("ring {}", i + 1))
                }
            };
            HeldOutCase { label, experiment }
        })
        .collect()
}

fn cached(index: usize) -> &'static WorldDefinition {
    static WORLDS: [OnceLock<WorldDefinition>; WORLD_NAMES.len()] = [const { OnceLock::new() }; WORLD_NAMES.len()];
    WORLDS[index].get_or_init(|| build(WORLD_NAMES[index]).expect("catalog name has a builder"))
}

/// All public worlds, each built once per process.
pub fn catalog() -> &'static [WorldDefinition] {
    static CATALOG: OnceLock<Vec<WorldDefinition>> = OnceLock::new();
    CATALOG.get_or_init(|| (0..WORLD_NAMES.len()).map(|i| cached(i).clone()).collect())
}

/// Builds only the requested world (and caches it).
pub fn lookup(name: &str) -> Result<WorldDefinition, CatalogError> {
    WORLD_NAMES
        .iter()
        .position(|n| *n == name)
        .map(|i| cached(i).clone())
        .ok_or_else(|| CatalogError::NotFound(name.to_string()))
}
