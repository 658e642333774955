//! Operator-side session records, log verification and transcript replay.
//!
//! The CSV log holds only what the agent saw. A [`SessionRecord`] adds what is
//! needed to re-derive it: the world definition, the seed and every accepted
//! experiment spec. It is never shown to the agent.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::wire::write_message;
use super::{Mode, Session};
use crate::engine::{run_experiment, ExperimentSpec, LogError, TrajectoryLog};
use crate::lawrunner::FitReport;
use crate::types::{NoiseMode, TrajectorySample, WorldDefinition};

pub const RECORD_FORMAT_VERSION: u32 = 1;
/// Residuals beyond this many noise standard deviations count as divergent.
pub const REPLAY_SIGMA_BOUND: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub format_version: u32,
    pub session_id: String,
    pub world: WorldDefinition,
    pub seed: u64,
    pub mode: Mode,
    pub round_budget: usize,
    pub rounds_used: usize,
    /// Spec of experiment `id` at index `id - 1`.
    pub experiments: Vec<ExperimentSpec>,
    pub fit_reports: Vec<FitReport>,
    pub finalized: bool,
}

impl SessionRecord {
    pub fn from_session(session: &Session) -> Self {
        let state = session.state();
        Self {
            format_version: RECORD_FORMAT_VERSION,
            session_id: state.log.session_id.clone(),
            world: session.world().clone(),
            seed: state.rng_seed,
            mode: state.mode,
            round_budget: state.round_budget,
            rounds_used: state.rounds_used,
            experiments: session.specs().to_vec(),
            fit_reports: session.fit_reports().to_vec(),
            finalized: session.is_finalized(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("session record serializes");
        text.push('\n');
        text
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergentRow {
    /// 1-based data row in the CSV log (the header is row 0).
    pub row: usize,
    pub experiment_id: u32,
    pub particle_index: usize,
    pub time: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayVerdict {
    pub rows_checked: usize,
    /// Largest position residual seen, in noise standard deviations.
    pub max_sigma: f64,
    pub divergent: Vec<DivergentRow>,
}

impl ReplayVerdict {
    pub fn is_clean(&self) -> bool {
        self.divergent.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = if self.is_clean() {
            format!(
                "clean: {} rows consistent with noise-free replay (max residual {:.2} sigma)\n",
                self.rows_checked, self.max_sigma
            )
        } else {
            format!(
                "divergent: {} of {} rows disagree with noise-free replay\n",
                self.divergent.len(),
                self.rows_checked
            )
        };
        for d in &self.divergent {
            out.push_str(&format!(
                "  row {} (experiment {}, particle {}, t = {}): {}\n",
                d.row, d.experiment_id, d.particle_index, d.time, d.reason
            ));
        }
        out
    }
}

fn flag(verdict: &mut ReplayVerdict, row: usize, s: &TrajectorySample, reason: String) {
    verdict.divergent.push(DivergentRow {
        row,
        experiment_id: s.experiment_id,
        particle_index: s.particle_index,
        time: s.time,
        reason,
    })
}

/// Re-simulates every logged experiment without noise and checks each row.
///
/// Rows flagged noise-free must match exactly; noisy positions must lie within
/// [`REPLAY_SIGMA_BOUND`] standard deviations of the truth; velocities must be
/// bit-identical unless the world also perturbs velocities.
pub fn verify_log(world: &WorldDefinition, specs: &[ExperimentSpec], log: &TrajectoryLog) -> ReplayVerdict {
    let sigma = world.noise.sigma();
    let mut verdict = ReplayVerdict {
        rows_checked: 0,
        max_sigma: 0.0,
        divergent: Vec::new(),
    };
    let mut row_index = 0;
    for id in 1..=log.experiment_count {
        let rows = log.samples_for(id);
        let first_row = row_index + 1;
        row_index += rows.len();
        let Some(spec) = specs.get(id as usize - 1) else {
            if let Some(s) = rows.first() {
                flag(&mut verdict, first_row, s, "no recorded spec for this experiment".into());
            }
            continue;
        };
        let truth = match run_experiment(world, spec, id) {
            Ok(t) => t,
            Err(e) => {
                if let Some(s) = rows.first() {
                    flag(&mut verdict, first_row, s, format!("replay failed: {e}"));
                }
                continue;
            }
        };
        if truth.len() != rows.len() {
            if let Some(s) = rows.first() {
                flag(
                    &mut verdict,
                    first_row,
                    s,
                    format!("log has {} rows, replay produced {}", rows.len(), truth.len()),
                );
            }
            continue;
        }
        for (offset, (logged, expected)) in rows.iter().zip(&truth).enumerate() {
            let row = first_row + offset;
            verdict.rows_checked += 1;
            if logged.particle_index != expected.particle_index || logged.time != expected.time {
                flag(&mut verdict, row, logged, "row order differs from replay".into());
                continue;
            }
            if !logged.noisy {
                if logged.position != expected.position || logged.velocity != expected.velocity {
                    flag(&mut verdict, row, logged, "noise-free row differs from replay".into());
                }
                continue;
            }
            let residual = logged.position - expected.position;
            let worst = residual.x.abs().max(residual.y.abs()) / sigma;
            let worst = if worst.is_nan() { f64::INFINITY } else { worst };
            verdict.max_sigma = verdict.max_sigma.max(worst);
            if worst > REPLAY_SIGMA_BOUND {
                flag(
                    &mut verdict,
                    row,
                    logged,
                    format!("position residual is {worst:.1} sigma"),
                );
            }
            if world.noise.mode == NoiseMode::PositionAndVelocity {
                let dv = logged.velocity - expected.velocity;
                let worst_v = dv.x.abs().max(dv.y.abs()) / sigma;
                if !(worst_v <= REPLAY_SIGMA_BOUND) {
                    flag(&mut verdict, row, logged, format!("velocity residual is {worst_v:.1} sigma"));
                }
            } else if logged.velocity != expected.velocity {
                flag(&mut verdict, row, logged, "velocity differs but the world only perturbs positions".into());
            }
        }
    }
    verdict
}

/// Feeds raw client frames to `session` and returns every server frame it
/// produced, starting with the opening prompt, as wire bytes.
pub fn transcript(session: &mut Session, inputs: &[String]) -> Result<Vec<u8>, LogError> {
    let mut out = Vec::new();
    write_message(&mut out, &session.opening())?;
    for input in inputs {
        for msg in session.handle_text(input)? {
            write_message(&mut out, &msg)?;
        }
    }
    out.flush()?;
    Ok(out)
}
