//! Session wire format: each message is an ASCII decimal byte length, a newline,
//! then that many bytes of JSON. Messages are tagged by a `kind` field.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::lawrunner::{CandidateLaw, FitReport};
use crate::vec2::Vec2;

/// Frames larger than this are rejected before allocation.
pub const MAX_FRAME_BYTES: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClientMessage {
    /// Raw experiment object; validated against the world before it costs a round.
    Experiment { experiment: Value },
    FitRequest { law: CandidateLaw },
    Finalize { explanation: String, law: CandidateLaw },
}

/// One observed sample as sent to the agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataRow {
    pub particle_index: usize,
    pub time: f64,
    pub position: Vec2,
    pub velocity: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServerMessage {
    Prompt {
        text: String,
        round: usize,
        rounds_remaining: usize,
    },
    Data {
        experiment_id: u32,
        /// The experiment as it was run (the sampled one in randomized mode).
        experiment: Value,
        rows: Vec<DataRow>,
    },
    FitReport { text: String, report: FitReport },
    Finalize { text: String },
    Error {
        code: String,
        message: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        details: Vec<String>,
    },
}

impl ServerMessage {
    pub fn error(code: &str, message: impl Into<String>, details: Vec<String>) -> Self {
        ServerMessage::Error {
            code: code.to_string(),
            message: message.into(),
            details,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ServerMessage::Prompt { .. } => "prompt",
            ServerMessage::Data { .. } => "data",
            ServerMessage::FitReport { .. } => "fit_report",
            ServerMessage::Finalize { .. } => "finalize",
            ServerMessage::Error { .. } => "error",
        }
    }
}

pub fn write_frame<W: Write>(out: &mut W, payload: &str) -> io::Result<()> {
    writeln!(out, "{}", payload.len())?;
    out.write_all(payload.as_bytes())?;
    out.flush()
}

pub fn write_message<W: Write, M: Serialize>(out: &mut W, message: &M) -> io::Result<()> {
    let text = serde_json::to_string(message).map_err(io::Error::other)?;
    write_frame(out, &text)
}

/// Reads one frame; `Ok(None)` on a clean end of stream before a length line.
pub fn read_frame<R: BufRead>(input: &mut R) -> io::Result<Option<String>> {
    let mut header = String::new();
    if input.read_line(&mut header)? == 0 {
        return Ok(None);
    }
    let trimmed = header.trim();
    let len: usize = trimmed.parse().map_err(|_| {
        io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame header must be a decimal byte count, got {trimmed:?}"),
        )
    })?;
    if len > MAX_FRAME_BYTES {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {len} bytes exceeds the {MAX_FRAME_BYTES}-byte limit"),
        ));
    }
    let mut buf = vec![0u8; len];
    input.read_exact(&mut buf)?;
    String::from_utf8(buf)
        .map(Some)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
