use super::pattern::Pattern;
use super::posterior::BetaPosterior;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Branch verdicts for meta-procedure control policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Continue,
    Skip,
    Repeat,
    Abort,
}

/// One conditional rule of a control policy: when `obs_pattern` matches at
/// member `index`, the verdict applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRule {
    pub index: usize,
    pub obs_pattern: Pattern,
    pub verdict: Verdict,
    #[serde(default = "default_repeat_limit")]
    pub repeat_limit: u32,
}

fn default_repeat_limit() -> u32 {
    2
}

/// An ordered composition of procedures with a branch-rule control policy
/// and its own success posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaProcedure {
    pub id: String,
    pub meta_goal: String,
    pub meta_pre: BTreeSet<Pattern>,
    pub members: Vec<String>,
    pub policy: Vec<BranchRule>,
    pub posterior: BetaPosterior,
    #[serde(default)]
    pub usage_count: u64,
    #[serde(default)]
    pub last_used: u64,
    #[serde(default)]
    pub created: u64,
    /// Per-member execution counts, index-aligned with `members`.
    #[serde(default)]
    pub member_runs: Vec<u64>,
    /// Per-member skip counts, index-aligned with `members`.
    #[serde(default)]
    pub member_skips: Vec<u64>,
}

impl MetaProcedure {
    /// Invariant check mirroring `validate_procedure`.
    pub fn validate(&self) -> Vec<String> {
        let mut violations = Vec::new();
        if self.members.len() < 2 {
            violations.push("meta-procedure needs at least 2 members".to_string());
        }
        if self.posterior.alpha <= 0.0 || self.posterior.beta <= 0.0 {
            violations.push("posterior counts must be positive".to_string());
        }
        for rule in &self.policy {
            if rule.index >= self.members.len() {
                violations.push(format!("branch rule index {} out of range", rule.index));
            }
            if rule.repeat_limit < 1 {
                violations.push("repeat_limit must be at least 1".to_string());
            }
        }
        violations
    }
}
