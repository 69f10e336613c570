use serde::{Deserialize, Serialize};

/// Where an executed action came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSource {
    Procedure(String),
    Meta(String),
    Fallback,
}

/// One (observation, action, reward) step of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStep {
    pub obs: String,
    pub action: String,
    pub reward: f64,
}

/// A completed episode: ordered steps plus per-step provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub task: String,
    pub steps: Vec<EpisodeStep>,
    pub provenance: Vec<StepSource>,
    pub terminal_success: bool,
}

impl EpisodeRecord {
    pub fn validate(&self) -> Vec<String> {
        let mut violations = Vec::new();
        if self.provenance.len() != self.steps.len() {
            violations.push(format!(
                "provenance length {} != step count {}",
                self.provenance.len(),
                self.steps.len()
            ));
        }
        if self.steps.iter().any(|s| !s.reward.is_finite()) {
            violations.push("non-finite reward".to_string());
        }
        violations
    }

    /// Ordered procedure ids executed in this episode (meta members appear
    /// as their meta id once per contiguous run).
    pub fn procedure_sequence(&self) -> Vec<String> {
        let mut seq = Vec::new();
        for src in &self.provenance {
            let id = match src {
                StepSource::Procedure(id) => Some(id.clone()),
                StepSource::Meta(id) => Some(id.clone()),
                StepSource::Fallback => None,
            };
            if let Some(id) = id {
                if seq.last() != Some(&id) {
                    seq.push(id);
                }
            }
        }
        seq
    }
}
