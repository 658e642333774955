//! Runner wire format: one JSON request line in, one JSON reply line out.
//!
//! Request: `{"schema_version": 1, "scenario": {...}, "params": {...}}` where the
//! scenario carries `topology`, `bodies`, `start_time` and either `times` (reply
//! `positions[t][b] = [x, y]`) or `duration` (reply `positions[b] = [x, y]`).
//! A reply may also carry `velocities` of the same shape, or just `{"error": text}`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::RunnerError;
use crate::engine::{exposed_bodies, ExperimentSpec, ExposedBody};
use crate::types::{Topology, WorldDefinition};
use crate::vec2::Vec2;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioHorizon {
    Times(Vec<f64>),
    Duration(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub topology: Topology,
    pub bodies: Vec<ExposedBody>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default)]
    pub start_time: f64,
}

impl Scenario {
    pub fn new(topology: Topology, bodies: Vec<ExposedBody>, horizon: ScenarioHorizon, start_time: f64) -> Self {
        let (times, duration) = match horizon {
            ScenarioHorizon::Times(t) => (Some(t), None),
            ScenarioHorizon::Duration(d) => (None, Some(d)),
        };
        Self {
            topology,
            bodies,
            times,
            duration,
            start_time,
        }
    }

    pub fn horizon(&self) -> Option<ScenarioHorizon> {
        match (&self.times, self.duration) {
            (Some(t), None) => Some(ScenarioHorizon::Times(t.clone())),
            (None, Some(d)) => Some(ScenarioHorizon::Duration(d)),
            _ => None,
        }
    }

    /// Absolute times the reply covers, one per prediction row.
    pub fn absolute_times(&self) -> Vec<f64> {
        match self.horizon() {
            Some(ScenarioHorizon::Times(t)) => t,
            Some(ScenarioHorizon::Duration(d)) => vec![self.start_time + d],
            None => Vec::new(),
        }
    }
}

/// Scenario for a spec's exposed bodies at the given measurement times.
pub fn scenario_for(world: &WorldDefinition, spec: &ExperimentSpec, times: &[f64]) -> Scenario {
    Scenario::new(
        world.topology,
        exposed_bodies(world, spec),
        ScenarioHorizon::Times(times.to_vec()),
        spec.start_time,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunnerRequest {
    pub schema_version: u32,
    pub scenario: Scenario,
    pub params: BTreeMap<String, f64>,
}

impl RunnerRequest {
    pub fn new(scenario: Scenario, params: BTreeMap<String, f64>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario,
            params,
        }
    }

    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("request serializes");
        line.push('\n');
        line
    }
}

/// Positions (and optional velocities) per requested time, per body.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub positions: Vec<Vec<Vec2>>,
    pub velocities: Option<Vec<Vec<Vec2>>>,
}

impl Prediction {
    /// Renders the reply the way a runner would for this scenario.
    pub fn to_reply(&self, scenario: &Scenario) -> Value {
        let pairs = |rows: &Vec<Vec2>| Value::from(rows.iter().map(|v| vec![v.x, v.y]).collect::<Vec<_>>());
        let shape = |grid: &Vec<Vec<Vec2>>| -> Value {
            if scenario.duration.is_some() {
                grid.first().map(pairs).unwrap_or(Value::Array(vec![]))
            } else {
                Value::Array(grid.iter().map(pairs).collect())
            }
        };
        let mut obj = serde_json::Map::new();
        obj.insert("positions".into(), shape(&self.positions));
        if let Some(v) = &self.velocities {
            obj.insert("velocities".into(), shape(v));
        }
        Value::Object(obj)
    }
}

fn shape_of(value: &Value) -> String {
    let mut dims = Vec::new();
    let mut cur = value;
    while let Value::Array(items) = cur {
        dims.push(items.len().to_string());
        match items.first() {
            Some(first) => cur = first,
            None => break,
        }
    }
    if dims.is_empty() {
        "scalar".to_string()
    } else {
        format!("({})", dims.join(","))
    }
}

fn expected_shape(times: Option<usize>, bodies: usize) -> String {
    match times {
        Some(t) => format!("({t},{bodies},2)"),
        None => format!("({bodies},2)"),
    }
}

fn parse_pairs(value: &Value, bodies: usize, expected: &str) -> Result<Vec<Vec2>, RunnerError> {
    let shape_err = || RunnerError::Shape {
        expected: expected.to_string(),
        got: shape_of(value),
    };
    let rows = value.as_array().ok_or_else(shape_err)?;
    if rows.len() != bodies {
        return Err(shape_err());
    }
    rows.iter()
        .map(|row| {
            let pair = row.as_array().filter(|p| p.len() == 2).ok_or_else(shape_err)?;
            let mut xy = [0.0; 2];
            for (slot, v) in xy.iter_mut().zip(pair) {
                *slot = match v {
                    Value::Number(n) => n.as_f64().ok_or(RunnerError::NonFinite)?,
                    Value::Null => return Err(RunnerError::NonFinite),
                    other => {
                        return Err(RunnerError::Malformed(format!("expected a number, found {other}")))
                    }
                };
                if !slot.is_finite() {
                    return Err(RunnerError::NonFinite);
                }
            }
            Ok(Vec2::new(xy[0], xy[1]))
        })
        .collect()
}

fn parse_grid(value: &Value, times: Option<usize>, bodies: usize) -> Result<Vec<Vec<Vec2>>, RunnerError> {
    let expected = expected_shape(times, bodies);
    match times {
        None => Ok(vec![parse_pairs(value, bodies, &expected)?]),
        Some(t) => {
            let rows = value.as_array().filter(|r| r.len() == t).ok_or_else(|| RunnerError::Shape {
                expected: expected.clone(),
                got: shape_of(value),
            })?;
            rows.iter()
                .map(|row| {
                    parse_pairs(row, bodies, &expected).map_err(|e| match e {
                        RunnerError::Shape { .. } => RunnerError::Shape {
                            expected: expected.clone(),
                            got: shape_of(value),
                        },
                        other => other,
                    })
                })
                .collect()
        }
    }
}

/// Validates one reply line against the scenario that produced it.
pub fn parse_response(line: &str, scenario: &Scenario) -> Result<Prediction, RunnerError> {
    let value: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(err) => {
            // Python's json module writes bare NaN / Infinity tokens.
            let patched = line
                .replace("-Infinity", "null")
                .replace("Infinity", "null")
                .replace("NaN", "null");
            match serde_json::from_str::<Value>(&patched) {
                Ok(v) if patched != line => v,
                _ => return Err(RunnerError::Malformed(format!("not valid JSON: {err}"))),
            }
        }
    };
    let obj = value
        .as_object()
        .ok_or_else(|| RunnerError::Malformed("reply must be a JSON object".into()))?;
    if let Some(err) = obj.get("error") {
        let text = err.as_str().map(str::to_string).unwrap_or_else(|| err.to_string());
        return Err(RunnerError::Reported(text));
    }
    let times = match scenario.horizon() {
        Some(ScenarioHorizon::Times(t)) => Some(t.len()),
        Some(ScenarioHorizon::Duration(_)) => None,
        None => return Err(RunnerError::Malformed("scenario has neither times nor duration".into())),
    };
    let bodies = scenario.bodies.len();
    let positions = obj
        .get("positions")
        .ok_or_else(|| RunnerError::Malformed("reply has no 'positions' field".into()))?;
    let positions = parse_grid(positions, times, bodies)?;
    let velocities = match obj.get("velocities") {
        None | Some(Value::Null) => None,
        Some(v) => Some(parse_grid(v, times, bodies)?),
    };
    Ok(Prediction { positions, velocities })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(bodies: usize, horizon: ScenarioHorizon) -> Scenario {
        let body = ExposedBody {
            position: Vec2::new(1.0, 2.0),
            velocity: Vec2::ZERO,
            property: None,
        };
        Scenario::new(Topology::ProbeOnly, vec![body; bodies], horizon, 0.0)
    }

    #[test]
    fn duration_reply_is_a_body_list() {
        let s = scenario(2, ScenarioHorizon::Duration(0.0));
        let p = parse_response(r#"{"positions": [[1, 2], [3, 4]]}"#, &s).unwrap();
        assert_eq!(p.positions, vec![vec![Vec2::new(1.0, 2.0), Vec2::new(3.0, 4.0)]]);
    }

    #[test]
    fn wrong_body_count_names_both_shapes() {
        let s = scenario(35, ScenarioHorizon::Duration(1.0));
        let reply = serde_json::json!({ "positions": vec![[0.0, 0.0]; 5] }).to_string();
        match parse_response(&reply, &s) {
            Err(RunnerError::Shape { expected, got }) => {
                assert_eq!(expected, "(35,2)");
                assert_eq!(got, "(5,2)");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn python_nan_is_non_finite() {
        let s = scenario(1, ScenarioHorizon::Times(vec![1.0]));
        assert_eq!(
            parse_response(r#"{"positions": [[[NaN, 0.0]]]}"#, &s),
            Err(RunnerError::NonFinite)
        );
    }

    #[test]
    fn error_and_garbage_are_distinct() {
        let s = scenario(1, ScenarioHorizon::Times(vec![1.0]));
        assert_eq!(
            parse_response(r#"{"error": "boom"}"#, &s),
            Err(RunnerError::Reported("boom".into()))
        );
        assert!(matches!(parse_response("hello", &s), Err(RunnerError::Malformed(_))));
    }

    #[test]
    fn request_serializes_one_line() {
        let s = scenario(1, ScenarioHorizon::Times(vec![0.5, 1.0]));
        let line = RunnerRequest::new(s, BTreeMap::from([("k".to_string(), 0.25)])).to_line();
        assert!(line.ends_with('\n') && line.matches('\n').count() == 1);
        let back: RunnerRequest = serde_json::from_str(line.trim()).unwrap();
        assert_eq!(back.params["k"], 0.25);
        assert!(line.contains("\"times\":[0.5,1.0]"));
        assert!(!line.contains("duration"));
    }
}
