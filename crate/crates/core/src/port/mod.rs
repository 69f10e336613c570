//! The abstraction port: every language-model-shaped operation the engine
//! needs, behind one trait. Production would back this with a real model;
//! the shipped implementations are deterministic stubs driven by
//! ground-truth labels, which keeps every run reproducible.

pub mod scripted;

pub use scripted::{NoisyPort, ScriptedPort};

use crate::error::{EngineError, Result};
use crate::memory::meta::BranchRule;
use crate::memory::pattern::Bindings;
use crate::memory::procedure::Procedure;
use crate::refine::Discriminators;
use crate::text::is_placeholder;
use crate::trajectory::Trajectory;
use std::sync::atomic::{AtomicU32, Ordering};

/// A contiguous, single-purpose span of a trajectory (inclusive bounds).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false // bounds are inclusive; a segment spans at least one step
    }
}

/// One parsed subgoal of a task instruction.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgoal {
    /// Lifted description, e.g. `cool <object> with <appliance>`.
    pub description: String,
    /// Satisfaction phrase: tokens that must appear contiguously in the
    /// observation (after binding substitution).
    pub phrase: Vec<String>,
    pub bindings: Bindings,
}

/// Substitutes bound placeholders in an action template. Unbound
/// placeholders are left in place; the environment will reject the action,
/// which is the correct failure mode.
pub fn instantiate(template: &str, bindings: &Bindings) -> String {
    crate::text::tokenize(template)
        .into_iter()
        .map(|t| {
            if is_placeholder(&t) {
                bindings.get(&t).cloned().unwrap_or(t)
            } else {
                t
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Everything the engine asks of a language model. All methods are
/// deterministic given their inputs (randomness is injected through `rng`
/// parameters).
pub trait AbstractionPort: Send + Sync {
    /// Splits a labeled trajectory into single-purpose segments.
    fn segment(&self, traj: &Trajectory) -> Result<Vec<Segment>>;

    /// Lifts one segment into a draft procedure with prior counts
    /// Beta(prior.0, prior.1). The embedding is left empty; the caller owns
    /// the encoder.
    fn abstract_segment(
        &self,
        traj: &Trajectory,
        seg: &Segment,
        prior: (f64, f64),
        created: u64,
    ) -> Result<Procedure>;

    /// Extracts discriminating differences between success and failure
    /// contexts.
    fn contrast(&self, successes: &[String], failures: &[String]) -> Result<Discriminators>;

    /// Distills a branch-rule control policy over an ordered member list.
    fn distill(&self, members: &[Procedure]) -> Result<Vec<BranchRule>>;

    /// Parses a task instruction into ordered subgoals with bindings.
    fn parse_task(&self, instruction: &str) -> Result<Vec<Subgoal>>;

    /// Proposes one action without memory support. `oracle` carries the
    /// environment's ground-truth action when available.
    fn zero_shot(
        &self,
        obs: &str,
        oracle: Option<&str>,
        legal: &[String],
        rng: &mut dyn rand::RngCore,
    ) -> Result<String>;
}

/// Per-episode call-budget guard. Template instantiation is free (it is
/// string substitution, not a model call); everything else counts.
pub struct BudgetedPort<'a> {
    inner: &'a dyn AbstractionPort,
    limit: u32,
    used: AtomicU32,
}

impl<'a> BudgetedPort<'a> {
    pub fn new(inner: &'a dyn AbstractionPort, limit: u32) -> Self {
        Self {
            inner,
            limit,
            used: AtomicU32::new(0),
        }
    }

    pub fn used(&self) -> u32 {
        self.used.load(Ordering::Relaxed)
    }

    pub fn remaining(&self) -> u32 {
        self.limit - self.used()
    }

    fn charge(&self) -> Result<()> {
        // One guard serves one episode; contention-free, Relaxed suffices.
        if self.used.fetch_update(Ordering::Relaxed, Ordering::Relaxed, |u| {
            (u < self.limit).then_some(u + 1)
        }).is_err() {
            return Err(EngineError::BudgetExceeded { limit: self.limit });
        }
        Ok(())
    }
}

impl AbstractionPort for BudgetedPort<'_> {
    fn segment(&self, traj: &Trajectory) -> Result<Vec<Segment>> {
        self.charge()?;
        self.inner.segment(traj)
    }

    fn abstract_segment(
        &self,
        traj: &Trajectory,
        seg: &Segment,
        prior: (f64, f64),
        created: u64,
    ) -> Result<Procedure> {
        self.charge()?;
        self.inner.abstract_segment(traj, seg, prior, created)
    }

    fn contrast(&self, successes: &[String], failures: &[String]) -> Result<Discriminators> {
        self.charge()?;
        self.inner.contrast(successes, failures)
    }

    fn distill(&self, members: &[Procedure]) -> Result<Vec<BranchRule>> {
        self.charge()?;
        self.inner.distill(members)
    }

    fn parse_task(&self, instruction: &str) -> Result<Vec<Subgoal>> {
        self.charge()?;
        self.inner.parse_task(instruction)
    }

    fn zero_shot(
        &self,
        obs: &str,
        oracle: Option<&str>,
        legal: &[String],
        rng: &mut dyn rand::RngCore,
    ) -> Result<String> {
        self.charge()?;
        self.inner.zero_shot(obs, oracle, legal, rng)
    }
}
