//! Agent-controlled experiment descriptions and their placement into a world.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::types::{ParticleState, ProbeScalarRole, Topology, WorldDefinition};
use crate::vec2::Vec2;

/// Longest simulated time an experiment may request.
pub const MAX_TIME: f64 = 100.0;
/// Most measurement times one experiment may request.
pub const MAX_MEASUREMENTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeInit {
    pub position: Vec2,
    pub velocity: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassiveProbeInit {
    pub position: Vec2,
    pub velocity: Vec2,
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingSlot {
    pub radius: f64,
    pub tangential_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    TwoParticle {
        p1: f64,
        p2: f64,
        pos2: Vec2,
        vel2: Vec2,
    },
    Probes {
        probes: Vec<ProbeInit>,
    },
    MassiveProbes {
        probes: Vec<MassiveProbeInit>,
    },
    Bodies {
        particles: Vec<ProbeInit>,
    },
    Ring {
        ring: Vec<RingSlot>,
    },
}

impl Payload {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Payload::TwoParticle { .. } => "two_particle",
            Payload::Probes { .. } => "probes",
            Payload::MassiveProbes { .. } => "massive_probes",
            Payload::Bodies { .. } => "bodies",
            Payload::Ring { .. } => "ring",
        }
    }

    fn len(&self) -> usize {
        match self {
            Payload::TwoParticle { .. } => 1,
            Payload::Probes { probes } => probes.len(),
            Payload::MassiveProbes { probes } => probes.len(),
            Payload::Bodies { particles } => particles.len(),
            Payload::Ring { ring } => ring.len(),
        }
    }
}

/// Payload variant a world accepts.
pub fn expected_payload_kind(world: &WorldDefinition) -> &'static str {
    match world.topology {
        Topology::TwoParticle => "two_particle",
        Topology::ProbeOnly => "probes",
        Topology::AnchorRingProbes => "massive_probes",
        Topology::SymmetricMultiBody if world.ring_input => "ring",
        Topology::SymmetricMultiBody => "bodies",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub payload: Payload,
    pub measurement_times: Vec<f64>,
    #[serde(default)]
    pub start_time: f64,
}

impl ExperimentSpec {
    pub fn new(payload: Payload, measurement_times: Vec<f64>) -> Self {
        Self {
            payload,
            measurement_times,
            start_time: 0.0,
        }
    }

    pub fn starting_at(mut self, start_time: f64) -> Self {
        self.start_time = start_time;
        self
    }

    /// Time span covered from the start to the last measurement.
    pub fn span(&self) -> f64 {
        self.measurement_times
            .last()
            .map(|t| t - self.start_time)
            .unwrap_or(0.0)
    }

    pub fn violations(&self, world: &WorldDefinition) -> Vec<String> {
        let mut out = Vec::new();
        let expected = expected_payload_kind(world);
        if self.payload.kind_name() != expected {
            out.push(format!(
                "payload '{}' does not match world topology (expected '{expected}')",
                self.payload.kind_name()
            ));
        } else if self.payload.len() != world.agent_slots {
            out.push(format!(
                "expected exactly {} {} entries, got {}",
                world.agent_slots,
                expected,
                self.payload.len()
            ));
        }
        out.extend(payload_value_violations(&self.payload));
        out.extend(schedule_violations(&self.measurement_times, self.start_time));
        out
    }
}

fn payload_value_violations(payload: &Payload) -> Vec<String> {
    let mut out = Vec::new();
    let mut finite = |label: String, values: &[f64]| {
        if values.iter().any(|v| !v.is_finite()) {
            out.push(format!("{label} must be finite"));
        }
    };
    match payload {
        Payload::TwoParticle { p1, p2, pos2, vel2 } => {
            finite("p1".into(), &[*p1]);
            finite("p2".into(), &[*p2]);
            finite("pos2".into(), &[pos2.x, pos2.y]);
            finite("vel2".into(), &[vel2.x, vel2.y]);
        }
        Payload::Probes { probes } => {
            for (i, p) in probes.iter().enumerate() {
                finite(format!("probes[{i}].position"), &[p.position.x, p.position.y]);
                finite(format!("probes[{i}].velocity"), &[p.velocity.x, p.velocity.y]);
            }
        }
        Payload::MassiveProbes { probes } => {
            for (i, p) in probes.iter().enumerate() {
                finite(format!("probes[{i}].position"), &[p.position.x, p.position.y]);
                finite(format!("probes[{i}].velocity"), &[p.velocity.x, p.velocity.y]);
                finite(format!("probes[{i}].mass"), &[p.mass]);
            }
        }
        Payload::Bodies { particles } => {
            for (i, p) in particles.iter().enumerate() {
                finite(format!("particles[{i}].position"), &[p.position.x, p.position.y]);
                finite(format!("particles[{i}].velocity"), &[p.velocity.x, p.velocity.y]);
            }
        }
        Payload::Ring { ring } => {
            for (i, r) in ring.iter().enumerate() {
                finite(format!("ring[{i}]"), &[r.radius, r.tangential_speed]);
            }
        }
    }
    match payload {
        Payload::TwoParticle { p2, .. } if !(*p2 > 0.0) => {
            out.push(format!("p2 must be positive, got {p2}"));
        }
        Payload::MassiveProbes { probes } => {
            for (i, p) in probes.iter().enumerate() {
                if !(p.mass > 0.0) {
                    out.push(format!("probes[{i}].mass must be positive, got {}", p.mass));
                }
            }
        }
        Payload::Ring { ring } => {
            for (i, r) in ring.iter().enumerate() {
                if !(r.radius > 0.0) {
                    out.push(format!("ring[{i}].radius must be positive, got {}", r.radius));
                }
            }
        }
        _ => {}
    }
    out
}

/// Checks ordering and range of a measurement schedule.
pub fn schedule_violations(times: &[f64], start_time: f64) -> Vec<String> {
    let mut out = Vec::new();
    if !start_time.is_finite() || start_time < 0.0 {
        out.push(format!("start_time must be a nonnegative number, got {start_time}"));
    }
    if times.is_empty() {
        out.push("measurement_times must not be empty".to_string());
        return out;
    }
    if times.len() > MAX_MEASUREMENTS {
        out.push(format!(
            "at most {MAX_MEASUREMENTS} measurement_times allowed, got {}",
            times.len()
        ));
    }
    if times.iter().any(|t| !t.is_finite()) {
        out.push("measurement_times must be finite numbers".to_string());
        return out;
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        out.push("measurement_times must be strictly increasing".to_string());
    }
    if start_time.is_finite() && times[0] < start_time {
        out.push(format!(
            "first measurement time {} precedes start_time {start_time}",
            times[0]
        ));
    }
    if let Some(last) = times.last() {
        if *last > MAX_TIME {
            out.push(format!("measurement times must not exceed {MAX_TIME}, got {last}"));
        }
    }
    out
}

/// One particle as the agent sees it at the start of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposedBody {
    pub position: Vec2,
    pub velocity: Vec2,
    /// Agent-chosen scalar for this body (source strength, `p2` or probe mass).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub property: Option<f64>,
}

/// Visible roster particles followed by the agent particles the spec places.
pub fn exposed_bodies(world: &WorldDefinition, spec: &ExperimentSpec) -> Vec<ExposedBody> {
    let mut bodies: Vec<ExposedBody> = world.roster[..world.visible_count.min(world.roster.len())]
        .iter()
        .map(|p| ExposedBody {
            position: p.position,
            velocity: p.velocity,
            property: None,
        })
        .collect();
    let body = |position, velocity, property| ExposedBody {
        position,
        velocity,
        property,
    };
    match &spec.payload {
        Payload::TwoParticle { p1, p2, pos2, vel2 } => {
            if let Some(source) = bodies.first_mut() {
                source.property = Some(*p1);
            }
            bodies.push(body(*pos2, *vel2, Some(*p2)));
        }
        Payload::Probes { probes } => {
            bodies.extend(probes.iter().map(|p| body(p.position, p.velocity, None)));
        }
        Payload::MassiveProbes { probes } => {
            bodies.extend(probes.iter().map(|p| body(p.position, p.velocity, Some(p.mass))));
        }
        Payload::Bodies { particles } => {
            bodies.extend(particles.iter().map(|p| body(p.position, p.velocity, None)));
        }
        Payload::Ring { ring } => {
            let count = ring.len() as f64;
            for (k, slot) in ring.iter().enumerate() {
                let theta = 2.0 * PI * k as f64 / count;
                let position = Vec2::from_polar(slot.radius, theta);
                let velocity = Vec2::new(-theta.sin(), theta.cos()) * slot.tangential_speed;
                bodies.push(body(position, velocity, None));
            }
        }
    }
    bodies
}

/// Full particle set for one experiment.
///
/// Roster particles come first in roster order, then agent particles in slot
/// order. `pinned[i]` marks particles held in place.
#[derive(Debug, Clone, PartialEq)]
pub struct Assembly {
    pub particles: Vec<ParticleState>,
    pub pinned: Vec<bool>,
    /// Full-set indices in exposed order: visible roster, then agent particles.
    pub exposed: Vec<usize>,
    pub roster_len: usize,
}

/// Places a spec's payload into the world. The spec must already be valid.
pub fn assemble(world: &WorldDefinition, spec: &ExperimentSpec) -> Assembly {
    assemble_bodies(world, &exposed_bodies(world, spec))
}

/// Builds the full particle set from exposed bodies, restoring hidden roster
/// particles and the world's charge and inertia templates.
///
/// Visible roster entries take their kinematics from `bodies`; agent entries
/// beyond the template length are ignored.
pub fn assemble_bodies(world: &WorldDefinition, bodies: &[ExposedBody]) -> Assembly {
    let mut particles = world.roster.clone();
    let roster_len = particles.len();
    let visible = world.visible_count.min(roster_len).min(bodies.len());
    for (p, b) in particles.iter_mut().zip(&bodies[..visible]) {
        *p = p.with_kinematics(b.position, b.velocity);
    }
    if world.topology == Topology::TwoParticle {
        if let (Some(source), Some(Some(p1))) = (particles.first_mut(), bodies.first().map(|b| b.property)) {
            source.charge.source = p1;
        }
    }
    for (k, b) in bodies[visible..].iter().take(world.agent_template.len()).enumerate() {
        let mut p = world.agent_template[k].with_kinematics(b.position, b.velocity);
        match (world.topology, b.property) {
            (Topology::TwoParticle, Some(p2)) => match world.probe_scalar {
                ProbeScalarRole::Inertia => p.inertia = p2,
                ProbeScalarRole::ResponseCharge => p.charge.response = p2,
            },
            (Topology::AnchorRingProbes, Some(mass)) => {
                p.charge.response = mass;
                p.inertia = mass;
            }
            _ => {}
        }
        particles.push(p);
    }

    let pinned = (0..particles.len())
        .map(|i| i < roster_len && world.roster_pinned(i))
        .collect();
    let exposed = (0..world.visible_count)
        .chain(roster_len..particles.len())
        .collect();
    Assembly {
        particles,
        pinned,
        exposed,
        roster_len,
    }
}
