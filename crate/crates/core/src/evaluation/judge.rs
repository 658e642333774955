//! Explanation scoring against a rubric by an external judge endpoint.
//!
//! The judge receives one fixed prompt (rubric bands, ground truth, explanation)
//! and must answer with free-text reasoning followed by `<score>N</score>`, where
//! `N` is an integer from 0 to 10.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable naming the judge endpoint URL.
pub const JUDGE_URL_ENV: &str = "LAWFORGE_JUDGE_URL";
/// Total judge calls made before a missing or malformed score is an error.
pub const JUDGE_ATTEMPTS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JudgeError {
    #[error("judge endpoint unreachable: {0}")]
    Transport(String),
    #[error("judge reply had no valid <score>N</score> marker after {0} attempts")]
    Unparsable(usize),
    #[error("rubric error: {0}")]
    Rubric(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricBand {
    pub min: u8,
    pub max: u8,
    pub criterion: String,
}

impl RubricBand {
    pub fn label(&self) -> String {
        if self.min == self.max {
            self.min.to_string()
        } else {
            format!("{}-{}", self.min, self.max)
        }
    }
}

/// Ordered score bands for one world, highest band first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricFile {
    pub world: String,
    /// Reference description of the world's physics shown to the judge only.
    pub ground_truth: String,
    pub bands: Vec<RubricBand>,
}

impl RubricFile {
    pub fn from_toml(text: &str) -> Result<Self, JudgeError> {
        let rubric: RubricFile = toml::from_str(text).map_err(|e| JudgeError::Rubric(e.to_string()))?;
        let problems = rubric.violations();
        if problems.is_empty() {
            Ok(rubric)
        } else {
            Err(JudgeError::Rubric(problems.join("; ")))
        }
    }

    pub fn load(path: &Path) -> Result<Self, JudgeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| JudgeError::Rubric(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("rubric serializes")
    }

    /// Bands must be ordered from high to low and tile 0..=10 without gaps.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.bands.is_empty() {
            out.push("rubric has no bands".to_string());
            return out;
        }
        let mut expected_max: i32 = 10;
        for band in &self.bands {
            if band.min > band.max {
                out.push(format!("band {} has min above max", band.label()));
            }
            if i32::from(band.max) != expected_max {
                out.push(format!(
                    "band {} should start at {expected_max}",
                    band.label()
                ));
            }
            if band.criterion.trim().is_empty() {
                out.push(format!("band {} has no criterion", band.label()));
            }
            expected_max = i32::from(band.min) - 1;
        }
        if expected_max != -1 {
            out.push("bands must reach a score of 0".to_string());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationScore {
    pub raw: u8,
    pub reasoning: String,
}

impl ExplanationScore {
    pub fn normalized(&self) -> f64 {
        f64::from(self.raw) / 10.0
    }
}

pub trait JudgeClient {
    fn complete(&mut self, prompt: &str) -> Result<String, JudgeError>;
}

/// Always answers with the same reply; for tests and offline runs.
pub struct StubJudge {
    pub reply: String,
    pub calls: usize,
}

impl StubJudge {
    pub fn scoring(raw: u8) -> Self {
        Self {
            reply: format!("Stub judge.\n<score>{raw}</score>"),
            calls: 0,
        }
    }

    pub fn replying(reply: impl Into<String>) -> Self {
        Self {
            reply: reply.into(),
            calls: 0,
        }
    }
}

impl JudgeClient for StubJudge {
    fn complete(&mut self, _prompt: &str) -> Result<String, JudgeError> {
        self.calls += 1;
        Ok(self.reply.clone())
    }
}

/// POSTs `{"prompt": text}` as JSON and reads either a JSON object with a
/// `text` (or `completion`) string field or a plain-text body.
pub struct HttpJudge {
    url: String,
    agent: ureq::Agent,
}

impl HttpJudge {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { url: url.into(), agent }
    }

    /// Uses the URL in `LAWFORGE_JUDGE_URL`, if set.
    pub fn from_env() -> Option<Self> {
        std::env::var(JUDGE_URL_ENV)
            .ok()
            .filter(|u| !u.trim().is_empty())
            .map(|u| Self::new(u, Duration::from_secs(120)))
    }
}

impl JudgeClient for HttpJudge {
    fn complete(&mut self, prompt: &str) -> Result<String, JudgeError> {
        let body = serde_json::json!({ "prompt": prompt });
        let mut response = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .map_err(|e| JudgeError::Transport(e.to_string()))?;
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| JudgeError::Transport(e.to_string()))?;
        if let Ok(serde_json::Value::Object(map)) = serde_json::from_str::<serde_json::Value>(&text) {
            for key in ["text", "completion", "content"] {
                if let Some(serde_json::Value::String(s)) = map.get(key) {
                    return Ok(s.clone());
                }
            }
        }
        Ok(text)
    }
}

/// The request sent to the judge.
pub fn judge_prompt(rubric: &RubricFile, explanation: &str) -> String {
    let mut out = String::new();
    out.push_str(
        "Grade a student's description of the physics of a simulated world. Compare it with the \
         reference description and pick the rubric band that fits best.\n\n",
    );
    out.push_str("Reference description:\n");
    out.push_str(rubric.ground_truth.trim());
    out.push_str("\n\nRubric (score: criterion):\n");
    for band in &rubric.bands {
        out.push_str(&format!("- {}: {}\n", band.label(), band.criterion.trim()));
    }
    out.push_str("\nStudent description:\n");
    out.push_str(explanation.trim());
    out.push_str(
        "\n\nExplain your grading briefly, then end with the integer score on its own line \
         as <score>N</score> with N between 0 and 10.\n",
    );
    out
}

/// The last `<score>N</score>` marker in `reply`, with the text before it.
pub fn parse_score(reply: &str) -> Option<ExplanationScore> {
    let start = reply.rfind("<score>")?;
    let rest = &reply[start + "<score>".len()..];
    let end = rest.find("</score>")?;
    let raw: u8 = rest[..end].trim().parse().ok()?;
    if raw > 10 {
        return None;
    }
    let reasoning = reply[..start]
        .trim()
        .trim_start_matches("Judge reasoning:")
        .trim()
        .to_string();
    Some(ExplanationScore { raw, reasoning })
}

/// Asks the judge up to [`JUDGE_ATTEMPTS`] times for a parsable score.
pub fn score_explanation(
    rubric: &RubricFile,
    explanation: &str,
    judge: &mut dyn JudgeClient,
) -> Result<ExplanationScore, JudgeError> {
    let prompt = judge_prompt(rubric, explanation);
    for _ in 0..JUDGE_ATTEMPTS {
        let reply = judge.complete(&prompt)?;
        if let Some(score) = parse_score(&reply) {
            return Ok(score);
        }
    }
    Err(JudgeError::Unparsable(JUDGE_ATTEMPTS))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rubric() -> RubricFile {
        RubricFile {
            world: "w".into(),
            ground_truth: "truth".into(),
            bands: vec![
                RubricBand { min: 10, max: 10, criterion: "all".into() },
                RubricBand { min: 1, max: 9, criterion: "some".into() },
                RubricBand { min: 0, max: 0, criterion: "none".into() },
            ],
        }
    }

    #[test]
    fn parses_last_marker() {
        let s = parse_score("fine <score>3</score> actually\n<score>10</score>").unwrap();
        assert_eq!(s.raw, 10);
        assert_eq!(s.normalized(), 1.0);
        assert!(parse_score("<score>11</score>").is_none());
        assert!(parse_score("no marker").is_none());
    }

    #[test]
    fn three_bad_replies_then_error() {
        let mut judge = StubJudge::replying("I refuse to grade.");
        let err = score_explanation(&rubric(), "x", &mut judge).unwrap_err();
        assert_eq!(err, JudgeError::Unparsable(3));
        assert_eq!(judge.calls, 3);
    }

    #[test]
    fn rubric_bands_must_tile() {
        assert!(rubric().violations().is_empty());
        let mut r = rubric();
        r.bands.remove(1);
        assert!(!r.violations().is_empty());
        let back = RubricFile::from_toml(&rubric().to_toml()).unwrap();
        assert_eq!(back, rubric());
    }
}
