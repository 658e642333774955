//! Simulation, session protocol, candidate fitting and scoring for the lawforge
//! physics-discovery benchmark.
//!
//! Worlds pair a hidden pairwise force law with a particle roster. Agents run
//! experiments through [`protocol::Session`], submit a candidate law that speaks
//! the runner wire protocol, and are scored by [`evaluation`].

pub mod engine;
pub mod evaluation;
pub mod forcelaws;
pub mod integrators;
pub mod lawrunner;
pub mod protocol;
pub mod reference_runner;
pub mod textfmt;
pub mod types;
pub mod vec2;
pub mod worldfile;

pub use types::{
    validate_world, ChargeVector, NoiseConfig, NoiseMode, ParticleState, ProbeScalarRole, Topology,
    TrajectorySample, WorldDefinition,
};
pub use vec2::Vec2;
