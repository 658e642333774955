//! Append-only trajectory log and its CSV persistence.

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::spec::ExperimentSpec;
use crate::types::TrajectorySample;
use crate::vec2::Vec2;

pub const LOG_COLUMNS: [&str; 9] = [
    "session_id",
    "experiment_id",
    "particle_index",
    "time",
    "x",
    "y",
    "vx",
    "vy",
    "noisy",
];

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("log CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("corrupt log at row {row}: {reason}")]
    Corrupt { row: usize, reason: String },
    #[error("samples must carry experiment_id {expected}, found {found}")]
    OutOfOrder { expected: u32, found: u32 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub session_id: String,
    pub rows: Vec<TrajectorySample>,
    pub experiment_count: u32,
    path: Option<PathBuf>,
}

impl TrajectoryLog {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            ..Self::default()
        }
    }

    /// A log mirrored to a CSV file; the file is created with its header row.
    pub fn persistent(session_id: impl Into<String>, path: impl Into<PathBuf>) -> Result<Self, LogError> {
        let path = path.into();
        let mut writer = csv::Writer::from_path(&path)?;
        writer.write_record(LOG_COLUMNS)?;
        writer.flush()?;
        Ok(Self {
            session_id: session_id.into(),
            path: Some(path),
            ..Self::default()
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn next_experiment_id(&self) -> u32 {
        self.experiment_count + 1
    }

    /// Appends one experiment's samples; every sample must carry the next experiment id.
    pub fn append(&mut self, samples: &[TrajectorySample]) -> Result<(), LogError> {
        if samples.is_empty() {
            return Ok(());
        }
        let expected = self.next_experiment_id();
        if let Some(bad) = samples.iter().find(|s| s.experiment_id != expected) {
            return Err(LogError::OutOfOrder {
                expected,
                found: bad.experiment_id,
            });
        }
        if let Some(path) = &self.path {
            let file = OpenOptions::new().append(true).open(path)?;
            let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
            for s in samples {
                writer.write_record(render_row(&self.session_id, s))?;
            }
            writer.flush()?;
        }
        self.rows.extend_from_slice(samples);
        self.experiment_count = expected;
        Ok(())
    }

    pub fn samples_for(&self, experiment_id: u32) -> Vec<TrajectorySample> {
        self.rows
            .iter()
            .filter(|s| s.experiment_id == experiment_id)
            .copied()
            .collect()
    }

    /// Renders the whole log as CSV text, header included.
    pub fn to_csv_string(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(LOG_COLUMNS).expect("in-memory write");
        for s in &self.rows {
            writer
                .write_record(render_row(&self.session_id, s))
                .expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
    }
}

/// Seventeen significant digits, enough for an exact `f64` round trip.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn render_row(session_id: &str, s: &TrajectorySample) -> [String; 9] {
    [
        session_id.to_string(),
        s.experiment_id.to_string(),
        s.particle_index.to_string(),
        num(s.time),
        num(s.position.x),
        num(s.position.y),
        num(s.velocity.x),
        num(s.velocity.y),
        s.noisy.to_string(),
    ]
}

/// Parses a persisted log, checking column order and experiment-id density.
pub fn read_log(path: &Path) -> Result<TrajectoryLog, LogError> {
    let mut reader = csv::Reader::from_path(path)?;
    parse_records(&mut reader).map(|mut log| {
        log.path = Some(path.to_path_buf());
        log
    })
}

impl std::str::FromStr for TrajectoryLog {
    type Err = LogError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        parse_records(&mut reader)
    }
}

fn parse_records<R: std::io::Read>(reader: &mut csv::Reader<R>) -> Result<TrajectoryLog, LogError> {
    let headers = reader.headers()?.clone();
    if headers.iter().ne(LOG_COLUMNS.iter().copied()) {
        return Err(LogError::Corrupt {
            row: 0,
            reason: format!("expected header {:?}", LOG_COLUMNS.join(",")),
        });
    }
    let mut log = TrajectoryLog::default();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let corrupt = |reason: String| LogError::Corrupt { row, reason };
        if record.len() != LOG_COLUMNS.len() {
            return Err(corrupt(format!("expected 9 fields, got {}", record.len())));
        }
        let field = |k: usize| record.get(k).unwrap_or_default();
        let float = |k: usize| -> Result<f64, LogError> {
            field(k)
                .parse::<f64>()
                .map_err(|_| corrupt(format!("column '{}' is not a number", LOG_COLUMNS[k])))
        };
        let experiment_id: u32 = field(1)
            .parse()
            .map_err(|_| corrupt("experiment_id is not an integer".into()))?;
        let particle_index: usize = field(2)
            .parse()
            .map_err(|_| corrupt("particle_index is not an integer".into()))?;
        let noisy = match field(8) {
            "true" => true,
            "false" => false,
            other => return Err(corrupt(format!("noisy must be true or false, got '{other}'"))),
        };
        let sample = TrajectorySample {
            experiment_id,
            particle_index,
            time: float(3)?,
            position: Vec2::new(float(4)?, float(5)?),
            velocity: Vec2::new(float(6)?, float(7)?),
            noisy,
        };
        if log.rows.is_empty() {
            log.session_id = field(0).to_string();
        } else if field(0) != log.session_id {
            return Err(corrupt("session_id changes within one log".into()));
        }
        if experiment_id == log.experiment_count + 1 {
            log.experiment_count = experiment_id;
        } else if experiment_id != log.experiment_count {
            return Err(corrupt(format!(
                "experiment_id {experiment_id} breaks the dense 1..n sequence"
            )));
        }
        log.rows.push(sample);
    }
    Ok(log)
}

/// One experiment as the fitter sees it: the inputs the agent chose plus the
/// (possibly noisy) samples it received.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedExperiment {
    pub experiment_id: u32,
    pub spec: ExperimentSpec,
    pub samples: Vec<TrajectorySample>,
}

impl ObservedExperiment {
    /// Pairs every logged experiment with its recorded spec (specs indexed from 1).
    pub fn collect(log: &TrajectoryLog, specs: &[ExperimentSpec]) -> Vec<ObservedExperiment> {
        (1..=log.experiment_count)
            .filter_map(|id| {
                let spec = specs.get(id as usize - 1)?.clone();
                let samples = log.samples_for(id);
                (!samples.is_empty()).then_some(ObservedExperiment {
                    experiment_id: id,
                    spec,
                    samples,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: u32, particle: usize, t: f64) -> TrajectorySample {
        TrajectorySample {
            experiment_id: id,
            particle_index: particle,
            time: t,
            position: Vec2::new(t / 3.0, -1e-300),
            velocity: Vec2::new(0.1 + t, f64::MAX),
            noisy: particle % 2 == 0,
        }
    }

    #[test]
    fn empty_append_is_a_no_op() {
        let mut log = TrajectoryLog::new("s");
        log.append(&[]).unwrap();
        assert_eq!(log, TrajectoryLog::new("s"));
    }

    #[test]
    fn rejects_wrong_experiment_id() {
        let mut log = TrajectoryLog::new("s");
        let err = log.append(&[sample(2, 0, 1.0)]).unwrap_err();
        assert!(matches!(err, LogError::OutOfOrder { expected: 1, found: 2 }));
    }

    #[test]
    fn csv_text_round_trips_exactly() {
        let mut log = TrajectoryLog::new("sess-1");
        for id in 1..=2 {
            let rows: Vec<_> = (0..4)
                .flat_map(|t| (0..5).map(move |p| sample(id, p, 0.7 * (t + 1) as f64)))
                .collect();
            log.append(&rows).unwrap();
        }
        assert_eq!(log.rows.len(), 40);
        let parsed: TrajectoryLog = log.to_csv_string().parse().unwrap();
        assert_eq!(parsed, log);
    }

    #[test]
    fn header_is_checked() {
        let text = "session_id,experiment_id,particle,time,x,y,vx,vy,noisy\n";
        assert!(matches!(
            text.parse::<TrajectoryLog>(),
            Err(LogError::Corrupt { row: 0, .. })
        ));
    }
}
