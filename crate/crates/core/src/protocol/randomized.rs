//! Grid sampler for the randomized-experiment ablation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{
    ExperimentSpec, MassiveProbeInit, Payload, ProbeInit, RingSlot, MAX_MEASUREMENTS, MAX_TIME,
};
use crate::types::{Topology, WorldDefinition};
use crate::vec2::Vec2;

/// Evenly spaced values `lo, lo + step, …, hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Grid {
    pub const fn new(lo: f64, hi: f64, step: f64) -> Self {
        Self { lo, hi, step }
    }

    pub fn len(&self) -> usize {
        ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.step
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.value(k)).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.value(rng.random_range(0..self.len()))
    }

    fn violations(&self, label: &str) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.lo.is_finite() && self.hi.is_finite() && self.step.is_finite()) {
            out.push(format!("{label} grid must be finite"));
        } else if !(self.step > 0.0) || self.hi < self.lo {
            out.push(format!("{label} grid needs lo <= hi and a positive step"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizedConfig {
    pub position_grid: Grid,
    pub velocity_grid: Grid,
    /// Agent-chosen scalars: p1, p2 and probe masses.
    pub property_grid: Grid,
    /// Ring radii for radius/speed worlds.
    pub radius_grid: Grid,
    pub time_ladder: Vec<f64>,
}

impl Default for RandomizedConfig {
    fn default() -> Self {
        Self {
            position_grid: Grid::new(-20.0, 20.0, 1.0),
            velocity_grid: Grid::new(-3.0, 3.0, 0.5),
            property_grid: Grid::new(0.5, 5.0, 0.5),
            radius_grid: Grid::new(1.0, 20.0, 1.0),
            time_ladder: vec![0.5, 1.0, 2.0, 4.0, 8.0],
        }
    }
}

impl RandomizedConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        out.extend(self.position_grid.violations("position"));
        out.extend(self.velocity_grid.violations("velocity"));
        out.extend(self.property_grid.violations("property"));
        out.extend(self.radius_grid.violations("radius"));
        if self.property_grid.lo <= 0.0 {
            out.push("property grid must be strictly positive".to_string());
        }
        if self.radius_grid.lo <= 0.0 {
            out.push("radius grid must be strictly positive".to_string());
        }
        let ladder = &self.time_ladder;
        if ladder.is_empty() || ladder.len() > MAX_MEASUREMENTS {
            out.push(format!("time ladder needs 1..={MAX_MEASUREMENTS} entries"));
        }
        if ladder.iter().any(|t| !(t.is_finite() && *t > 0.0 && *t <= MAX_TIME))
            || ladder.windows(2).any(|w| w[1] <= w[0])
        {
            out.push("time ladder must be strictly increasing positive times".to_string());
        }
        out
    }
}

/// Draws one experiment for the world from the grids in `config`.
pub fn sample_random_experiment<R: Rng + ?Sized>(
    world: &WorldDefinition,
    config: &RandomizedConfig,
    rng: &mut R,
) -> ExperimentSpec {
    let pos = |rng: &mut R| Vec2::new(config.position_grid.sample(rng), config.position_grid.sample(rng));
    let vel = |rng: &mut R| Vec2::new(config.velocity_grid.sample(rng), config.velocity_grid.sample(rng));
    let slots = world.agent_slots;
    let payload = match world.topology {
        Topology::TwoParticle => {
            let p1 = config.property_grid.sample(rng);
            let p2 = config.property_grid.sample(rng);
            let pos2 = pos(rng);
            let vel2 = vel(rng);
            Payload::TwoParticle { p1, p2, pos2, vel2 }
        }
        Topology::ProbeOnly => Payload::Probes {
            probes: (0..slots)
                .map(|_| {
                    let position = pos(rng);
                    ProbeInit {
                        position,
                        velocity: vel(rng),
                    }
                })
                .collect(),
        },
        Topology::AnchorRingProbes => Payload::MassiveProbes {
            probes: (0..slots)
                .map(|_| {
                    let position = pos(rng);
                    let velocity = vel(rng);
                    MassiveProbeInit {
                        position,
                        velocity,
                        mass: config.property_grid.sample(rng),
                    }
                })
                .collect(),
        },
        Topology::SymmetricMultiBody if world.ring_input => Payload::Ring {
            ring: (0..slots)
                .map(|_| {
                    let radius = config.radius_grid.sample(rng);
                    RingSlot {
                        radius,
                        tangential_speed: config.velocity_grid.sample(rng),
                    }
                })
                .collect(),
        },
        Topology::SymmetricMultiBody => Payload::Bodies {
            particles: (0..slots)
                .map(|_| {
                    let position = pos(rng);
                    ProbeInit {
                        position,
                        velocity: vel(rng),
                    }
                })
                .collect(),
        },
    };
    ExperimentSpec::new(payload, config.time_ladder.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_enumeration() {
        let g = Grid::new(-20.0, 20.0, 1.0);
        assert_eq!(g.len(), 41);
        assert_eq!(g.value(0), -20.0);
        assert_eq!(g.value(40), 20.0);
        assert_eq!(Grid::new(-3.0, 3.0, 0.5).len(), 13);
        assert_eq!(Grid::new(0.5, 5.0, 0.5).len(), 10);
    }

    #[test]
    fn default_config_is_valid() {
        assert!(RandomizedConfig::default().violations().is_empty());
    }
}
