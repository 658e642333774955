//! Shared domain vocabulary: charges, particles, worlds and trajectory samples.

use serde::{Deserialize, Serialize};

use crate::evaluation::HeldOutSuite;
use crate::forcelaws::{LawKind, LawSpec};
use crate::integrators::{IntegratorChoice, Scheme};
use crate::protocol::RandomizedConfig;
use crate::vec2::Vec2;

/// Generalized charge of a particle, split into the strength with which it
/// generates the world's field and the strength with which it feels it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargeVector {
    pub source: f64,
    pub response: f64,
    #[serde(default)]
    pub species: usize,
}

impl ChargeVector {
    pub const fn new(source: f64, response: f64) -> Self {
        Self {
            source,
            response,
            species: 0,
        }
    }

    /// Feels the field but does not generate one.
    pub const fn probe(response: f64) -> Self {
        Self::new(0.0, response)
    }

    pub const fn symmetric(charge: f64) -> Self {
        Self::new(charge, charge)
    }

    pub const fn with_species(mut self, species: usize) -> Self {
        self.species = species;
        self
    }

    pub fn is_neutral_probe(&self) -> bool {
        self.source == 0.0 && self.response != 0.0
    }

    pub fn is_pure_source(&self) -> bool {
        self.response == 0.0 && self.source != 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub charge: ChargeVector,
    pub inertia: f64,
}

impl ParticleState {
    pub fn new(position: Vec2, velocity: Vec2, charge: ChargeVector, inertia: f64) -> Self {
        Self {
            position,
            velocity,
            charge,
            inertia,
        }
    }

    pub fn at_rest(position: Vec2, charge: ChargeVector, inertia: f64) -> Self {
        Self::new(position, Vec2::ZERO, charge, inertia)
    }

    pub fn with_kinematics(mut self, position: Vec2, velocity: Vec2) -> Self {
        self.position = position;
        self.velocity = velocity;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Fixed source at the origin plus one mobile probe.
    TwoParticle,
    /// Pinned background particles plus five neutral probes.
    ProbeOnly,
    /// Pinned anchor, integrated ring orbiters, five massive probes.
    AnchorRingProbes,
    /// Every particle is integrated; the agent sets all initial states.
    SymmetricMultiBody,
}

impl Topology {
    pub fn as_str(self) -> &'static str {
        match self {
            Topology::TwoParticle => "two_particle",
            Topology::ProbeOnly => "probe_only",
            Topology::AnchorRingProbes => "anchor_ring_probes",
            Topology::SymmetricMultiBody => "symmetric_multi_body",
        }
    }

    /// Number of held-out evaluation cases a world of this topology ships.
    pub fn held_out_case_count(self) -> usize {
        match self {
            Topology::TwoParticle => 3,
            _ => 2,
        }
    }
}

/// What the second agent-controlled scalar of a two-particle world means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeScalarRole {
    /// `p2` divides the force (mass-like).
    #[default]
    Inertia,
    /// `p2` is the probe's response charge; inertia stays at the template value.
    ResponseCharge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    None,
    PositionOnly,
    PositionAndVelocity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Fraction of the reference position spread.
    pub level: f64,
    pub mode: NoiseMode,
    /// Standard deviation of held-out test-particle positions, frozen at build time.
    pub reference_std: f64,
}

impl NoiseConfig {
    pub fn sigma(&self) -> f64 {
        self.level * self.reference_std
    }

    pub fn is_active(&self) -> bool {
        self.mode != NoiseMode::None && self.level > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub experiment_id: u32,
    pub particle_index: usize,
    pub time: f64,
    pub position: Vec2,
    pub velocity: Vec2,
    pub noisy: bool,
}

/// One benchmark world: hidden law, particle roster and simulation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldDefinition {
    pub name: String,
    pub topology: Topology,
    pub law: LawSpec,
    /// Non-agent particles; entries at index `visible_count` and above are hidden.
    pub roster: Vec<ParticleState>,
    pub visible_count: usize,
    pub agent_slots: usize,
    /// Charge and inertia defaults for each agent-controlled slot.
    pub agent_template: Vec<ParticleState>,
    #[serde(default)]
    pub species_table: Vec<f64>,
    pub integrator: Scheme,
    pub step_size: f64,
    pub softening: f64,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub probe_scalar: ProbeScalarRole,
    /// Circle-style worlds expose only radius and tangential speed per ring slot.
    #[serde(default)]
    pub ring_input: bool,
    pub randomized: RandomizedConfig,
    pub held_out: HeldOutSuite,
    /// Free-form provenance notes (which values are artifact defaults).
    #[serde(default)]
    pub notes: Vec<String>,
}

impl WorldDefinition {
    pub fn integrator_choice(&self) -> IntegratorChoice {
        IntegratorChoice::fixed(self.integrator, self.step_size)
    }

    /// Number of particles reported to the agent per measurement time.
    pub fn exposed_count(&self) -> usize {
        self.visible_count + self.agent_slots
    }

    /// Whether roster particle `index` is held in place rather than integrated.
    pub fn roster_pinned(&self, index: usize) -> bool {
        match self.topology {
            Topology::TwoParticle | Topology::ProbeOnly => true,
            Topology::AnchorRingProbes => index == 0,
            Topology::SymmetricMultiBody => false,
        }
    }

    /// Exposed particle indices that are agent-controlled (the scored particles).
    pub fn agent_exposed_indices(&self) -> std::ops::Range<usize> {
        self.visible_count..self.exposed_count()
    }

    /// Every numeric value the agent must never see verbatim: law parameters,
    /// species couplings, body-force payloads and hidden particle placements.
    pub fn hidden_values(&self) -> Vec<f64> {
        let mut values: Vec<f64> = self.law.params.values().copied().collect();
        values.extend(self.species_table.iter().copied());
        if let Some(body) = &self.law.body_force {
            values.push(body.drift_accel.x);
            values.push(body.drift_accel.y);
            values.push(body.hubble_rate);
        }
        for particle in &self.roster {
            values.push(particle.charge.source);
            values.push(particle.charge.response);
        }
        for particle in self.roster.iter().skip(self.visible_count) {
            values.push(particle.position.x);
            values.push(particle.position.y);
        }
        values.retain(|v| *v != 0.0 && v.is_finite());
        values
    }
}

/// Checks every structural invariant of a world; an empty list means valid.
pub fn validate_world(world: &WorldDefinition) -> Vec<String> {
    let mut violations = Vec::new();

    if world.name.trim().is_empty() {
        violations.push("name must not be empty".to_string());
    }
    if world.visible_count > world.roster.len() {
        violations.push(format!(
            "visible_count {} exceeds roster length {}",
            world.visible_count,
            world.roster.len()
        ));
    }

    let required_slots = match world.topology {
        Topology::TwoParticle => {
            if world.roster.len() != 1 {
                violations.push(format!(
                    "two_particle topology requires roster length 1, got {}",
                    world.roster.len()
                ));
            }
            Some(1)
        }
        Topology::ProbeOnly => Some(5),
        Topology::AnchorRingProbes => {
            if world.roster.len() != 21 {
                violations.push(format!(
                    "anchor_ring_probes topology requires roster length 21, got {}",
                    world.roster.len()
                ));
            }
            Some(5)
        }
        Topology::SymmetricMultiBody => None,
    };
    let slots_ok = match required_slots {
        Some(required) if world.agent_slots != required => {
            violations.push(format!(
                "agent_slots must be {} for {} topology, got {}",
                required,
                world.topology.as_str(),
                world.agent_slots
            ));
            false
        }
        None if world.agent_slots == 0 => {
            violations.push("agent_slots must be positive".to_string());
            false
        }
        _ => true,
    };
    if slots_ok && world.agent_template.len() != world.agent_slots {
        violations.push(format!(
            "agent_template has {} entries but agent_slots is {}",
            world.agent_template.len(),
            world.agent_slots
        ));
    }

    let particles = world
        .roster
        .iter()
        .enumerate()
        .map(|(i, p)| (format!("roster[{i}]"), p))
        .chain(
            world
                .agent_template
                .iter()
                .enumerate()
                .map(|(i, p)| (format!("agent_template[{i}]"), p)),
        );
    for (label, particle) in particles {
        if !(particle.inertia > 0.0) || !particle.inertia.is_finite() {
            violations.push(format!("{label}: inertia must be positive, got {}", particle.inertia));
        }
        if !particle.position.is_finite() || !particle.velocity.is_finite() {
            violations.push(format!("{label}: position and velocity must be finite"));
        }
        if !particle.charge.source.is_finite() || !particle.charge.response.is_finite() {
            violations.push(format!("{label}: charges must be finite"));
        }
        let species = particle.charge.species;
        let in_table = if world.species_table.is_empty() {
            species == 0
        } else {
            species < world.species_table.len()
        };
        if !in_table {
            violations.push(format!(
                "{label}: species index {species} outside species table of length {}",
                world.species_table.len()
            ));
        }
    }

    violations.extend(world.law.violations());
    if world.law.kind == LawKind::SpeciesCoupled && world.species_table.is_empty() {
        violations.push("species_coupled law requires a non-empty species_table".to_string());
    }

    if !(world.step_size > 0.0) || !world.step_size.is_finite() {
        violations.push(format!("step_size must be positive, got {}", world.step_size));
    }
    if !(world.softening >= 0.0) || !world.softening.is_finite() {
        violations.push(format!("softening must be nonnegative, got {}", world.softening));
    }
    if !(world.noise.level >= 0.0) || !world.noise.level.is_finite() {
        violations.push(format!("noise level must be nonnegative, got {}", world.noise.level));
    }
    if !(world.noise.reference_std > 0.0) || !world.noise.reference_std.is_finite() {
        violations.push(format!(
            "noise reference_std must be positive, got {}",
            world.noise.reference_std
        ));
    }
    if world.ring_input && world.topology != Topology::SymmetricMultiBody {
        violations.push("ring_input is only meaningful for symmetric_multi_body".to_string());
    }
    violations.extend(world.randomized.violations());

    let suite = &world.held_out;
    if suite.world_name != world.name {
        violations.push(format!(
            "held-out suite belongs to '{}', not '{}'",
            suite.world_name, world.name
        ));
    }
    let expected_cases = world.topology.held_out_case_count();
    if suite.cases.len() != expected_cases {
        violations.push(format!(
            "held-out suite must have {expected_cases} cases, got {}",
            suite.cases.len()
        ));
    }
    if !(suite.reference_variance > 0.0) || !suite.reference_variance.is_finite() {
        violations.push(format!(
            "held-out reference_variance must be positive, got {}",
            suite.reference_variance
        ));
    }
    if slots_ok {
        for case in &suite.cases {
            for problem in case.experiment.violations(world) {
                violations.push(format!("held-out case '{}': {problem}", case.label));
            }
        }
    }
    violations
}
