use super::pattern::Pattern;
use super::posterior::BetaPosterior;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Context snippets kept in success/failure sets are truncated to this many
/// characters to bound the memory footprint.
pub const CONTEXT_SNIPPET_LEN: usize = 512;

/// An ordered list of action templates, e.g. `["open <appliance>", ...]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct ActionSchema {
    pub steps: Vec<String>,
}

impl ActionSchema {
    pub fn new<S: Into<String>>(steps: impl IntoIterator<Item = S>) -> Self {
        Self {
            steps: steps.into_iter().map(Into::into).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// A stored skill: goal, precondition patterns, action schema, postcondition
/// patterns, plus the evidence bookkeeping used by selection and refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Procedure {
    pub id: String,
    pub goal: String,
    pub preconditions: BTreeSet<Pattern>,
    pub schema: ActionSchema,
    pub postconditions: BTreeSet<Pattern>,
    pub embedding: Vec<f64>,
    pub posterior: BetaPosterior,
    /// Bounded pre-execution contexts of successful runs.
    pub successes: Vec<String>,
    /// Bounded pre-execution contexts of failed runs (capacity K_fail).
    pub failures: Vec<String>,
    pub usage_count: u64,
    pub last_used: u64,
    pub created: u64,
    /// Evidence mass at creation; usage accounting is measured against it.
    #[serde(default = "default_prior_mass")]
    pub prior_mass: f64,
    /// Retired procedures stay in the snapshot but leave candidate retrieval.
    #[serde(default)]
    pub retired: bool,
    /// Variant ids this procedure was specialized into, if any.
    #[serde(default)]
    pub specialized_into: Vec<String>,
}

fn default_prior_mass() -> f64 {
    2.0
}

impl Procedure {
    pub fn new(id: impl Into<String>, goal: impl Into<String>, created: u64) -> Self {
        Self {
            id: id.into(),
            goal: goal.into(),
            preconditions: BTreeSet::new(),
            schema: ActionSchema::default(),
            postconditions: BTreeSet::new(),
            embedding: Vec::new(),
            posterior: BetaPosterior::uniform(),
            successes: Vec::new(),
            failures: Vec::new(),
            usage_count: 0,
            last_used: created,
            created,
            prior_mass: 2.0,
            retired: false,
            specialized_into: Vec::new(),
        }
    }

    pub fn with_posterior(mut self, posterior: BetaPosterior) -> Self {
        self.posterior = posterior;
        self.prior_mass = posterior.total();
        self
    }

    /// Records one execution outcome: unit posterior increment, context
    /// snippet appended to the matching set, usage bookkeeping updated.
    ///
    /// Failure-set overflow beyond K_fail is the maintenance module's job;
    /// this only appends.
    pub fn record_outcome(&mut self, success: bool, context: &str, episode: u64) {
        self.posterior.observe(success);
        let snippet: String = context.chars().take(CONTEXT_SNIPPET_LEN).collect();
        if success {
            self.successes.push(snippet);
        } else {
            self.failures.push(snippet);
        }
        self.usage_count += 1;
        self.last_used = episode;
    }
}

/// Invariant check; violations are data, not faults.
pub fn validate_procedure(p: &Procedure, k_fail: usize) -> Vec<String> {
    let mut violations = Vec::new();
    if p.posterior.alpha <= 0.0 {
        violations.push("alpha must be positive".to_string());
    }
    if p.posterior.beta <= 0.0 {
        violations.push("beta must be positive".to_string());
    }
    if p.failures.len() > k_fail {
        violations.push(format!(
            "failure index over capacity: {} > {}",
            p.failures.len(),
            k_fail
        ));
    }
    if p.schema.is_empty() {
        violations.push("action schema is empty".to_string());
    }
    if !p.embedding.is_empty() {
        let norm: f64 = p.embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            violations.push(format!("embedding norm {norm} is not unit"));
        }
    }
    for pat in p.preconditions.iter().chain(p.postconditions.iter()) {
        if pat.is_empty() {
            violations.push("empty pattern token list".to_string());
        }
    }
    let evidence = p.posterior.total() - p.prior_mass;
    if (p.usage_count as f64) < evidence - 1e-9 {
        violations.push(format!(
            "usage_count {} below accumulated evidence {evidence}",
            p.usage_count
        ));
    }
    violations
}
