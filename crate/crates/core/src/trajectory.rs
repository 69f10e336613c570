//! Raw interaction trajectories, the input to offline memory construction.
//!
//! The JSONL corpus format is one trajectory per line:
//! `{"task": ..., "steps": [{"obs", "action", "reward", "label", "bindings"}, ...], "final_obs": ...}`
//! where `label` is an optional ground-truth phase tag and `bindings` the
//! entity grounding for placeholder lifting.

use crate::error::Result;
use crate::memory::pattern::Bindings;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajStep {
    pub obs: String,
    pub action: String,
    pub reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Bindings::is_empty")]
    pub bindings: Bindings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task: String,
    pub steps: Vec<TrajStep>,
    /// Observation after the last action; used for postcondition extraction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_obs: Option<String>,
}

impl Trajectory {
    /// Entity bindings for the whole trajectory (union over steps; later
    /// steps win on conflict, which does not occur in practice).
    pub fn bindings(&self) -> Bindings {
        let mut merged = Bindings::new();
        for step in &self.steps {
            for (k, v) in &step.bindings {
                merged.insert(k.clone(), v.clone());
            }
        }
        merged
    }

    /// Observation following step `i`: the next step's observation, or
    /// `final_obs`, or step `i`'s own observation as a last resort.
    pub fn obs_after(&self, i: usize) -> &str {
        if i + 1 < self.steps.len() {
            &self.steps[i + 1].obs
        } else if let Some(fo) = &self.final_obs {
            fo
        } else {
            &self.steps[i].obs
        }
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Reads a JSONL corpus. Malformed lines surface as `SnapshotParse` with the
/// (1-based) line number.
pub fn read_jsonl(path: &Path) -> Result<Vec<Trajectory>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let traj: Trajectory =
            serde_json::from_str(&line).map_err(|e| crate::error::EngineError::SnapshotParse {
                offset: 0,
                line: i + 1,
                column: e.column(),
                message: format!("corpus line {}: {e}", i + 1),
            })?;
        out.push(traj);
    }
    Ok(out)
}

/// Writes a JSONL corpus (one compact JSON object per line).
pub fn write_jsonl(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for t in trajectories {
        let line = serde_json::to_string(t)
            .map_err(|e| crate::error::EngineError::InvalidConfig(format!("corpus write: {e}")))?;
        writeln!(file, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trajectory {
        Trajectory {
            task: "put a chilled lettuce on counter1".into(),
            steps: vec![
                TrajStep {
                    obs: "you see a lettuce".into(),
                    action: "take lettuce".into(),
                    reward: 0.0,
                    label: Some("acquire".into()),
                    bindings: Bindings::from([("<object>".into(), "lettuce".into())]),
                },
                TrajStep {
                    obs: "you are holding the lettuce".into(),
                    action: "go to fridge1".into(),
                    reward: 1.0,
                    label: Some("cool".into()),
                    bindings: Bindings::new(),
                },
            ],
            final_obs: Some("the lettuce is cooled".into()),
        }
    }

    #[test]
    fn jsonl_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let corpus = vec![sample(), sample()];
        write_jsonl(&path, &corpus).unwrap();
        assert_eq!(read_jsonl(&path).unwrap(), corpus);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"task\": \"t\", \"steps\": []}\nnot json\n").unwrap();
        let err = read_jsonl(&path).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn obs_after_prefers_next_then_final() {
        let t = sample();
        assert_eq!(t.obs_after(0), "you are holding the lettuce");
        assert_eq!(t.obs_after(1), "the lettuce is cooled");
        let mut no_final = t.clone();
        no_final.final_obs = None;
        assert_eq!(no_final.obs_after(1), "you are holding the lettuce");
    }

    #[test]
    fn bindings_union() {
        let t = sample();
        assert_eq!(t.bindings().get("<object>").unwrap(), "lettuce");
        assert_eq!(t.total_reward(), 1.0);
    }
}
