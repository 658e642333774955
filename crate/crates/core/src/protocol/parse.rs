//! Strict parsing of agent experiment messages; every violation is reported by name.

use serde_json::{Map, Value};

use crate::engine::{
    expected_payload_kind, ExperimentSpec, MassiveProbeInit, Payload, ProbeInit, RingSlot,
};
use crate::types::WorldDefinition;
use crate::vec2::Vec2;

struct Problems(Vec<String>);

impl Problems {
    fn push(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }

    fn number(&mut self, v: Option<&Value>, path: &str) -> Option<f64> {
        match v {
            None => {
                self.push(format!("missing field '{path}'"));
                None
            }
            Some(Value::Number(n)) => n.as_f64(),
            Some(other) => {
                self.push(format!("'{path}' must be a number, got {}", type_name(other)));
                None
            }
        }
    }

    fn vector(&mut self, v: Option<&Value>, path: &str) -> Option<Vec2> {
        match v {
            None => {
                self.push(format!("missing field '{path}'"));
                None
            }
            Some(Value::Array(items)) if items.len() == 2 => {
                let x = self.number(items.first(), &format!("{path}[0]"));
                let y = self.number(items.get(1), &format!("{path}[1]"));
                Some(Vec2::new(x?, y?))
            }
            Some(Value::Array(items)) => {
                self.push(format!("'{path}' must have 2 components, got {}", items.len()));
                None
            }
            Some(other) => {
                self.push(format!("'{path}' must be a [x, y] pair, got {}", type_name(other)));
                None
            }
        }
    }

    fn object<'a>(&mut self, v: &'a Value, path: &str, allowed: &[&str]) -> Option<&'a Map<String, Value>> {
        match v.as_object() {
            Some(map) => {
                for key in map.keys() {
                    if !allowed.contains(&key.as_str()) {
                        self.push(format!("unknown field '{path}{key}'"));
                    }
                }
                Some(map)
            }
            None => {
                self.push(format!("'{}' must be an object", path.trim_end_matches('.')));
                None
            }
        }
    }

    /// An array of objects, checked against the expected arity.
    fn entries<'a>(&mut self, v: Option<&'a Value>, name: &str, arity: usize) -> Vec<&'a Value> {
        match v {
            None => {
                self.push(format!("missing field '{name}'"));
                Vec::new()
            }
            Some(Value::Array(items)) => {
                if items.len() != arity {
                    self.push(format!(
                        "'{name}' must contain exactly {arity} entries, got {}",
                        items.len()
                    ));
                }
                items.iter().collect()
            }
            Some(other) => {
                self.push(format!("'{name}' must be a list, got {}", type_name(other)));
                Vec::new()
            }
        }
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "list",
        Value::Object(_) => "object",
    }
}

/// Top-level keys an experiment for this world may contain.
pub fn experiment_fields(world: &WorldDefinition) -> &'static [&'static str] {
    match expected_payload_kind(world) {
        "two_particle" => &["p1", "p2", "pos2", "vel2", "measurement_times", "start_time"],
        "probes" | "massive_probes" => &["probes", "measurement_times", "start_time"],
        "ring" => &["ring", "measurement_times", "start_time"],
        _ => &["particles", "measurement_times", "start_time"],
    }
}

fn kinematic(p: &mut Problems, entry: &Value, path: &str, extra: &[&str]) -> Option<(Vec2, Vec2)> {
    let mut allowed = vec!["position", "velocity"];
    allowed.extend_from_slice(extra);
    let prefix = format!("{path}.");
    let map = p.object(entry, &prefix, &allowed)?;
    let position = p.vector(map.get("position"), &format!("{path}.position"));
    let velocity = p.vector(map.get("velocity"), &format!("{path}.velocity"));
    Some((position?, velocity?))
}

/// Parses one experiment object for `world`, or lists every problem found.
pub fn parse_experiment(value: &Value, world: &WorldDefinition) -> Result<ExperimentSpec, Vec<String>> {
    let mut p = Problems(Vec::new());
    let Some(map) = p.object(value, "", experiment_fields(world)) else {
        return Err(p.0);
    };
    let slots = world.agent_slots;

    let payload = match expected_payload_kind(world) {
        "two_particle" => {
            let p1 = p.number(map.get("p1"), "p1");
            let p2 = p.number(map.get("p2"), "p2");
            let pos2 = p.vector(map.get("pos2"), "pos2");
            let vel2 = p.vector(map.get("vel2"), "vel2");
            match (p1, p2, pos2, vel2) {
                (Some(p1), Some(p2), Some(pos2), Some(vel2)) => Some(Payload::TwoParticle { p1, p2, pos2, vel2 }),
                _ => None,
            }
        }
        "probes" => {
            let items = p.entries(map.get("probes"), "probes", slots);
            let probes: Vec<Option<ProbeInit>> = items
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    kinematic(&mut p, e, &format!("probes[{i}]"), &[])
                        .map(|(position, velocity)| ProbeInit { position, velocity })
                })
                .collect();
            probes.into_iter().collect::<Option<Vec<_>>>().map(|probes| Payload::Probes { probes })
        }
        "massive_probes" => {
            let items = p.entries(map.get("probes"), "probes", slots);
            let probes: Vec<Option<MassiveProbeInit>> = items
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let path = format!("probes[{i}]");
                    let kin = kinematic(&mut p, e, &path, &["mass"]);
                    let mass = e
                        .as_object()
                        .and_then(|m| p.number(m.get("mass"), &format!("{path}.mass")));
                    let (position, velocity) = kin?;
                    Some(MassiveProbeInit {
                        position,
                        velocity,
                        mass: mass?,
                    })
                })
                .collect();
            probes
                .into_iter()
                .collect::<Option<Vec<_>>>()
                .map(|probes| Payload::MassiveProbes { probes })
        }
        "ring" => {
            let items = p.entries(map.get("ring"), "ring", slots);
            let ring: Vec<Option<RingSlot>> = items
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let path = format!("ring[{i}]");
                    let m = p.object(e, &format!("{path}."), &["radius", "tangential_speed"])?;
                    let radius = p.number(m.get("radius"), &format!("{path}.radius"));
                    let speed = p.number(m.get("tangential_speed"), &format!("{path}.tangential_speed"));
                    Some(RingSlot {
                        radius: radius?,
                        tangential_speed: speed?,
                    })
                })
                .collect();
            ring.into_iter().collect::<Option<Vec<_>>>().map(|ring| Payload::Ring { ring })
        }
        _ => {
            let items = p.entries(map.get("particles"), "particles", slots);
            let particles: Vec<Option<ProbeInit>> = items
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    kinematic(&mut p, e, &format!("particles[{i}]"), &[])
                        .map(|(position, velocity)| ProbeInit { position, velocity })
                })
                .collect();
            particles
                .into_iter()
                .collect::<Option<Vec<_>>>()
                .map(|particles| Payload::Bodies { particles })
        }
    };

    let times: Option<Vec<f64>> = match map.get("measurement_times") {
        None => {
            p.push("missing field 'measurement_times'");
            None
        }
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, v)| p.number(Some(v), &format!("measurement_times[{i}]")))
            .collect::<Vec<_>>()
            .into_iter()
            .collect(),
        Some(other) => {
            p.push(format!("'measurement_times' must be a list, got {}", type_name(other)));
            None
        }
    };
    let start_time = match map.get("start_time") {
        None => Some(0.0),
        some => p.number(some, "start_time"),
    };

    if let (Some(payload), Some(times), Some(start_time)) = (payload, times, start_time) {
        let spec = ExperimentSpec::new(payload, times).starting_at(start_time);
        // Arity problems were already reported above.
        for v in spec.violations(world) {
            if !v.starts_with("expected exactly") {
                p.push(v);
            }
        }
        if p.0.is_empty() {
            return Ok(spec);
        }
    }
    Err(p.0)
}

/// Agent-facing JSON form of a spec, accepted back by [`parse_experiment`].
pub fn experiment_to_json(spec: &ExperimentSpec) -> Value {
    let pair = |v: Vec2| serde_json::json!([v.x, v.y]);
    let mut obj = match &spec.payload {
        Payload::TwoParticle { p1, p2, pos2, vel2 } => serde_json::json!({
            "p1": p1, "p2": p2, "pos2": pair(*pos2), "vel2": pair(*vel2)
        }),
        Payload::Probes { probes } => serde_json::json!({
            "probes": probes.iter().map(|p| serde_json::json!({
                "position": pair(p.position), "velocity": pair(p.velocity)
            })).collect::<Vec<_>>()
        }),
        Payload::MassiveProbes { probes } => serde_json::json!({
            "probes": probes.iter().map(|p| serde_json::json!({
                "position": pair(p.position), "velocity": pair(p.velocity), "mass": p.mass
            })).collect::<Vec<_>>()
        }),
        Payload::Bodies { particles } => serde_json::json!({
            "particles": particles.iter().map(|p| serde_json::json!({
                "position": pair(p.position), "velocity": pair(p.velocity)
            })).collect::<Vec<_>>()
        }),
        Payload::Ring { ring } => serde_json::json!({
            "ring": ring.iter().map(|r| serde_json::json!({
                "radius": r.radius, "tangential_speed": r.tangential_speed
            })).collect::<Vec<_>>()
        }),
    };
    let map = obj.as_object_mut().expect("object literal");
    map.insert("measurement_times".into(), serde_json::json!(spec.measurement_times));
    if spec.start_time != 0.0 {
        map.insert("start_time".into(), serde_json::json!(spec.start_time));
    }
    obj
}
