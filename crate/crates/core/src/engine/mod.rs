//! Experiment execution: force summation, integration, sampling and observation noise.

mod log;
mod spec;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::forcelaws::{ForceError, ForceField};
use crate::integrators::{integrate_to_times, IntegrationError, IntegratorChoice};
use crate::types::{NoiseConfig, NoiseMode, ParticleState, TrajectorySample, WorldDefinition};
use crate::vec2::Vec2;

pub use log::{read_log, LogError, ObservedExperiment, TrajectoryLog, LOG_COLUMNS};
pub use spec::{
    assemble, assemble_bodies, expected_payload_kind, exposed_bodies, ExposedBody, schedule_violations, Assembly,
    ExperimentSpec, MassiveProbeInit, Payload, ProbeInit, RingSlot, MAX_MEASUREMENTS, MAX_TIME,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid experiment: {}", .0.join("; "))]
    InvalidSpec(Vec<String>),
    #[error("simulation diverged: {0}")]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Force(#[from] ForceError),
}

/// Acceleration field for an assembled particle set, with pinned particles held still.
pub struct WorldField {
    field: ForceField,
    pinned: Vec<bool>,
}

impl WorldField {
    pub fn new(world: &WorldDefinition, pinned: Vec<bool>) -> Result<Self, ForceError> {
        Ok(Self {
            field: ForceField::new(&world.law, &world.species_table, world.softening)?,
            pinned,
        })
    }

    pub fn fill(&self, states: &[ParticleState], t: f64, out: &mut [Vec2]) {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = if self.pinned.get(i).copied().unwrap_or(false) {
                Vec2::ZERO
            } else {
                self.field.acceleration_on(states, i, t)
            };
        }
    }
}

/// Noise-free states of the full particle set at each measurement time.
pub fn simulate_full(
    world: &WorldDefinition,
    spec: &ExperimentSpec,
    choice: &IntegratorChoice,
) -> Result<(Assembly, Vec<Vec<ParticleState>>), EngineError> {
    let problems = spec.violations(world);
    if !problems.is_empty() {
        return Err(EngineError::InvalidSpec(problems));
    }
    let assembly = assemble(world, spec);
    let field = WorldField::new(world, assembly.pinned.clone())?;
    let mut accel = |s: &[ParticleState], t: f64, out: &mut [Vec2]| field.fill(s, t, out);
    let snapshots = integrate_to_times(
        &assembly.particles,
        &mut accel,
        &spec.measurement_times,
        choice,
        spec.start_time,
    )?;
    Ok((assembly, snapshots))
}

/// Noise-free samples of every exposed particle, tagged with `experiment_id`.
/// Hidden roster particles take part in the dynamics but never appear in the output.
pub fn run_experiment(
    world: &WorldDefinition,
    spec: &ExperimentSpec,
    experiment_id: u32,
) -> Result<Vec<TrajectorySample>, EngineError> {
    run_experiment_with(world, spec, experiment_id, &world.integrator_choice())
}

pub fn run_experiment_with(
    world: &WorldDefinition,
    spec: &ExperimentSpec,
    experiment_id: u32,
    choice: &IntegratorChoice,
) -> Result<Vec<TrajectorySample>, EngineError> {
    let (assembly, snapshots) = simulate_full(world, spec, choice)?;
    let mut samples = Vec::with_capacity(snapshots.len() * assembly.exposed.len());
    for (time, snap) in spec.measurement_times.iter().zip(&snapshots) {
        if let Some(bad) = snap.iter().position(|p| !p.position.is_finite() || !p.velocity.is_finite()) {
            return Err(EngineError::Integration(IntegrationError::NonFiniteAcceleration {
                particle: bad,
                time: *time,
            }));
        }
        for (exposed_index, &full_index) in assembly.exposed.iter().enumerate() {
            let p = &snap[full_index];
            samples.push(TrajectorySample {
                experiment_id,
                particle_index: exposed_index,
                time: *time,
                position: p.position,
                velocity: p.velocity,
                noisy: false,
            });
        }
    }
    Ok(samples)
}

/// Per-experiment noise seed derived from the session seed.
pub fn noise_seed(session_seed: u64, experiment_id: u32) -> u64 {
    // SplitMix64 finalizer over the combined key.
    let mut z = session_seed ^ (u64::from(experiment_id)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Adds zero-mean Gaussian perturbations of standard deviation `level × reference_std`.
pub fn inject_noise(samples: &[TrajectorySample], noise: &NoiseConfig, seed: u64) -> Vec<TrajectorySample> {
    if !noise.is_active() {
        return samples.to_vec();
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.sigma()).expect("noise sigma is finite and nonnegative");
    samples
        .iter()
        .map(|s| {
            let mut out = *s;
            out.position.x += normal.sample(&mut rng);
            out.position.y += normal.sample(&mut rng);
            if noise.mode == NoiseMode::PositionAndVelocity {
                out.velocity.x += normal.sample(&mut rng);
                out.velocity.y += normal.sample(&mut rng);
            }
            out.noisy = true;
            out
        })
        .collect()
}
